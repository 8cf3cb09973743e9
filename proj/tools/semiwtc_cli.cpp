#include <CLI11.hpp>
#include <Eigen/Core>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "semiwtc/experiment.hpp"
#include "semiwtc/log.hpp"
#include "semiwtc/util.hpp"

namespace fs = std::filesystem;
using namespace semiwtc;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  int threads = 1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Experiment config file (key = value)");
  app->add_option("--seed", c.seed, "Run a single seed instead of experiment.seeds");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--threads", c.threads, "Worker threads; values above 1 may not be bit-exact")
      ->check(CLI::PositiveNumber);
  app->add_option("--set", c.overrides, "Override a config key, e.g. --set train.patience=5");
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (c.seed) cfg.seeds = {*c.seed};
  Eigen::setNbThreads(c.threads);
  return cfg;
}

std::string run_tag(const RunResult& r) { return r.label + ".seed" + std::to_string(r.seed); }

RunHook artifact_hook(const fs::path& out) {
  return [out](const RunResult& r, const RBMLPModel& model, const DatasetSplit& split, const Encoder& enc) {
    const std::string tag = run_tag(r);
    model.to_checkpoint().save(out / ("model." + tag + ".ckpt"));
    enc.save(out / ("encoder." + tag + ".txt"));
    write_manifests(out / ("manifests." + tag), split);
  };
}

void print_summary(const std::vector<RunResult>& runs) {
  for (const auto& c : summarize_runs(runs)) {
    std::cout << c.label << ": runs=" << c.runs << " acc=" << percent2(c.accuracy) << " f1=" << percent2(c.macro_f1)
              << " tpr=" << percent2(c.tpr) << " fpr=" << percent2(c.fpr) << '\n';
  }
}

int run_mode(const Common& common, std::optional<ExperimentMode> mode, bool artifacts) {
  ExperimentConfig cfg = load_config(common);
  if (mode) cfg.mode = *mode;
  cfg.validate();
  const PreparedData data = prepare_data(cfg);
  fs::create_directories(common.out);
  const auto runs = run_experiment(cfg, data, artifacts ? artifact_hook(common.out) : RunHook{});
  write_reports(common.out, cfg, runs);
  print_summary(runs);
  return 0;
}

int preprocess(const Common& common) {
  ExperimentConfig cfg = load_config(common);
  cfg.validate();
  const PreparedData data = prepare_data(cfg);
  const std::uint64_t seed = cfg.seeds.front();
  const PreparedSplit p = split_dataset(data.table, data.schema, cfg.split, seed);
  fs::create_directories(common.out);
  p.encoder.save(fs::path(common.out) / "encoder.txt");
  write_manifests(fs::path(common.out) / "manifests", p.split);
  std::ostringstream s;
  s << "source=" << data.source << "\nseed=" << seed << "\nrows=" << data.table.size()
    << "\ninput_dim=" << p.split.input_dim() << "\nclasses=" << join(p.split.class_vocab, ",")
    << "\nlabeled=" << p.split.labeled_train.size() << "\nunlabeled=" << p.split.unlabeled_train.size()
    << "\nvalidation=" << p.split.validation.size() << "\ntest=" << p.split.test.size() << '\n';
  write_text_file(fs::path(common.out) / "preprocess.txt", s.str());
  std::cout << s.str();
  return 0;
}

int evaluate(const Common& common, const std::string& checkpoint) {
  ExperimentConfig cfg = load_config(common);
  cfg.validate();
  const PreparedData data = prepare_data(cfg);
  const std::uint64_t seed = cfg.seeds.front();
  const PreparedSplit p = split_dataset(data.table, data.schema, cfg.split, seed);
  const RBMLPModel model = RBMLPModel::from_checkpoint(Checkpoint::load(checkpoint));
  if (model.config().input_dim != p.split.input_dim() || model.config().num_classes != p.split.num_classes())
    throw DimensionError("checkpoint shape does not match the prepared data");
  RunResult r;
  r.label = "evaluate";
  r.seed = seed;
  r.class_vocab = p.split.class_vocab;
  r.labeled = p.split.labeled_train.size();
  r.unlabeled = p.split.unlabeled_train.size();
  r.metrics = evaluate_model(model, p.split.test);
  write_reports(common.out, cfg, {r});
  print_summary({r});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised fine-grained traffic classification"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "quiet, warn, info or debug")
      ->check(CLI::IsMember({"quiet", "warn", "info", "debug"}));

  Common common;
  auto* pre = app.add_subcommand("preprocess", "Load, merge, downsample, encode and split; write manifests");
  add_common(pre, common);
  auto* train = app.add_subcommand("train", "Train and evaluate with the standard protocol");
  add_common(train, common);
  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test partition");
  add_common(eval, common);
  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  auto* exp = app.add_subcommand("experiment", "Run an experiment protocol");
  add_common(exp, common);
  std::string mode_name;
  exp->add_option("mode", mode_name, "standard, ratio_sweep, ablation, mislabel, unseen or aar")->required();
  auto* aar = app.add_subcommand("aar", "Unseen-class holdout followed by active resampling rounds");
  add_common(aar, common);
  auto* synth = app.add_subcommand("synth", "Write the synthetic NSL-KDD-shaped dataset as CSV");
  std::string synth_out;
  SurrogateConfig sc;
  synth->add_option("--out", synth_out, "Output CSV path")->required();
  synth->add_option("--seed", sc.seed, "Generator seed");
  synth->add_option("--scale", sc.scale, "Row count multiplier");

  CLI11_PARSE(app, argc, argv);
  const std::map<std::string, LogLevel> levels = {
      {"quiet", LogLevel::quiet}, {"warn", LogLevel::warn}, {"info", LogLevel::info}, {"debug", LogLevel::debug}};
  set_log_level(levels.at(log_level));

  try {
    if (*pre) return preprocess(common);
    if (*train) return run_mode(common, ExperimentMode::standard, true);
    if (*eval) return evaluate(common, checkpoint);
    if (*exp) return run_mode(common, parse_mode(mode_name), true);
    if (*aar) return run_mode(common, ExperimentMode::aar, true);
    if (*synth) {
      write_surrogate_csv(fs::path(synth_out), sc);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
