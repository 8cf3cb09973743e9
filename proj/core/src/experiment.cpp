#include "semiwtc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "semiwtc/log.hpp"
#include "semiwtc/util.hpp"

namespace semiwtc {

std::string_view to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::standard: return "standard";
    case ExperimentMode::ratio_sweep: return "ratio_sweep";
    case ExperimentMode::ablation: return "ablation";
    case ExperimentMode::mislabel: return "mislabel";
    case ExperimentMode::unseen: return "unseen";
    case ExperimentMode::aar: return "aar";
  }
  return "standard";
}

ExperimentMode parse_mode(std::string_view text) {
  for (auto m : {ExperimentMode::standard, ExperimentMode::ratio_sweep, ExperimentMode::ablation,
                 ExperimentMode::mislabel, ExperimentMode::unseen, ExperimentMode::aar})
    if (to_string(m) == text) return m;
  throw ConfigError("unknown experiment mode '" + std::string(text) + "'");
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  try {
    return parse_bool(v);
  } catch (const ConfigError&) {
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
  }
}

std::vector<std::string> list_items(const std::string& v) {
  std::vector<std::string> out;
  for (auto& item : split(v, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

template <class T, class F>
std::string join_list(const std::vector<T>& items, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + f(items[i]);
  return out;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const std::string& v = value;
  auto f = [&] { return static_cast<float>(to_double(key, v)); };
  auto d = [&] { return to_double(key, v); };
  auto u = [&] { return static_cast<std::size_t>(to_uint(key, v)); };
  auto b = [&] { return to_bool(key, v); };

  if (key == "data.path") data_path = v;
  else if (key == "data.schema") schema_path = v;
  else if (key == "data.downsample_cap") downsample_cap = u();
  else if (key == "data.downsample_seed") downsample_seed = to_uint(key, v);
  else if (key == "data.standardize") {
    if (v == "schema") standardize.reset();
    else standardize = b();
  } else if (key == "data.surrogate_seed") surrogate.seed = to_uint(key, v);
  else if (key == "data.surrogate_scale") surrogate.scale = d();
  else if (key == "data.surrogate_spread") surrogate.class_spread = d();
  else if (key == "data.surrogate_noise") surrogate.noise = d();
  else if (key == "split.label_ratio") split.label_ratio = d();
  else if (key == "split.val_ratio") split.val_ratio = d();
  else if (key == "split.test_ratio") split.test_ratio = d();
  else if (key == "train.batch_size") train.batch_size = u();
  else if (key == "train.max_outer_iters") train.max_outer_iters = u();
  else if (key == "train.patience") train.patience = u();
  else if (key == "train.warmup_epochs") train.warmup_epochs = u();
  else if (key == "train.sup_epochs") train.sup_epochs = u();
  else if (key == "train.unsup_epochs") train.unsup_epochs = u();
  else if (key == "train.semi_supervised") train.semi_supervised = b();
  else if (key == "train.head_passing") train.head_passing = parse_head_passing(v);
  else if (key == "train.lr") train.adam.lr = f();
  else if (key == "train.beta1") train.adam.beta1 = f();
  else if (key == "train.beta2") train.adam.beta2 = f();
  else if (key == "train.eps") train.adam.eps = f();
  else if (key == "model.hidden") {
    hidden.clear();
    for (const auto& item : list_items(v)) hidden.push_back(static_cast<std::size_t>(to_uint(key, item)));
  } else if (key == "model.residual") residual = b();
  else if (key == "model.batchnorm") batchnorm = b();
  else if (key == "loss.wtc") train.loss.wtc = b();
  else if (key == "loss.alpha_sup") train.loss.alpha_sup = f();
  else if (key == "loss.alpha_unsup") train.loss.alpha_unsup = f();
  else if (key == "loss.weight_clip_lo") train.loss.weight_clip_lo = f();
  else if (key == "loss.weight_clip_hi") train.loss.weight_clip_hi = f();
  else if (key == "loss.cross_head_mse") train.loss.cross_head_mse = f();
  else if (key == "cum.enabled") train.cum.enabled = b();
  else if (key == "cum.threshold") train.cum.threshold = f();
  else if (key == "cum.normalize_weights") train.cum.normalize_weights = b();
  else if (key == "aar.sample_fraction") aar.sample_fraction = d();
  else if (key == "aar.cadence_epochs") aar.cadence_epochs = u();
  else if (key == "aar.rounds") aar_rounds = u();
  else if (key == "aar.pool_fraction") aar_pool_fraction = d();
  else if (key == "aar.margin") aar.dilation.margin = f();
  else if (key == "aar.dilation_epochs") aar.dilation.epochs = u();
  else if (key == "aar.dilation_batch") aar.dilation.batch_size = u();
  else if (key == "aar.bandwidth") aar.bandwidth = d();
  else if (key == "aar.kernel") {
    if (v == "flat") aar.mean_shift.kernel = Kernel::flat;
    else if (v == "gaussian") aar.mean_shift.kernel = Kernel::gaussian;
    else throw ConfigError("config key 'aar.kernel': expected flat or gaussian");
  } else if (key == "aar.max_iters") aar.mean_shift.max_iters = u();
  else if (key == "aar.tol") aar.mean_shift.tol = d();
  else if (key == "aar.merge_radius") aar.mean_shift.merge_radius = d();
  else if (key == "experiment.mode") mode = parse_mode(v);
  else if (key == "experiment.seeds") {
    seeds.clear();
    for (const auto& item : list_items(v)) seeds.push_back(to_uint(key, item));
  } else if (key == "experiment.ratios") {
    ratios.clear();
    for (const auto& item : list_items(v)) ratios.push_back(to_double(key, item));
  } else if (key == "experiment.swap_fraction") swap_fraction = d();
  else if (key == "experiment.heldout") heldout = list_items(v);
  else throw ConfigError("unknown config key '" + key + "'");
}

void ExperimentConfig::validate() const {
  train.validate();
  aar.validate();
  if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  if (hidden.size() != 4) throw ConfigError("model.hidden must list four widths");
  auto in01 = [](double x) { return x > 0.0 && x < 1.0; };
  if (!(split.label_ratio > 0.0 && split.label_ratio <= 1.0)) throw ConfigError("split.label_ratio must be in (0, 1]");
  if (!in01(split.val_ratio) || !in01(split.test_ratio)) throw ConfigError("split ratios must be in (0, 1)");
  if (swap_fraction < 0.0 || swap_fraction > 0.5) throw ConfigError("experiment.swap_fraction must be in [0, 0.5]");
  if (aar_pool_fraction < 0.0 || aar_pool_fraction > 1.0) throw ConfigError("aar.pool_fraction must be in [0, 1]");
  if (mode == ExperimentMode::ratio_sweep) {
    if (ratios.empty()) throw ConfigError("experiment.ratios must not be empty");
    if (!std::is_sorted(ratios.begin(), ratios.end())) throw ConfigError("experiment.ratios must be ascending");
    for (double r : ratios)
      if (!(r > 0.0 && r <= 1.0)) throw ConfigError("experiment.ratios entries must be in (0, 1]");
  }
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream o;
  auto kv = [&](const char* k, const std::string& v) { o << k << " = " << v << '\n'; };
  auto num = [](double x) { return fmt17(x); };
  auto boolean = [](bool x) { return std::string(x ? "true" : "false"); };
  kv("data.path", data_path);
  kv("data.schema", schema_path);
  kv("data.downsample_cap", std::to_string(downsample_cap));
  kv("data.downsample_seed", std::to_string(downsample_seed));
  kv("data.standardize", standardize ? boolean(*standardize) : std::string("schema"));
  kv("data.surrogate_seed", std::to_string(surrogate.seed));
  kv("data.surrogate_scale", num(surrogate.scale));
  kv("data.surrogate_spread", num(surrogate.class_spread));
  kv("data.surrogate_noise", num(surrogate.noise));
  kv("split.label_ratio", num(split.label_ratio));
  kv("split.val_ratio", num(split.val_ratio));
  kv("split.test_ratio", num(split.test_ratio));
  kv("train.batch_size", std::to_string(train.batch_size));
  kv("train.max_outer_iters", std::to_string(train.max_outer_iters));
  kv("train.patience", std::to_string(train.patience));
  kv("train.warmup_epochs", std::to_string(train.warmup_epochs));
  kv("train.sup_epochs", std::to_string(train.sup_epochs));
  kv("train.unsup_epochs", std::to_string(train.unsup_epochs));
  kv("train.semi_supervised", boolean(train.semi_supervised));
  kv("train.head_passing", std::string(to_string(train.head_passing)));
  kv("train.lr", num(train.adam.lr));
  kv("train.beta1", num(train.adam.beta1));
  kv("train.beta2", num(train.adam.beta2));
  kv("train.eps", num(train.adam.eps));
  kv("model.hidden", join_list(hidden, [](std::size_t h) { return std::to_string(h); }));
  kv("model.residual", boolean(residual));
  kv("model.batchnorm", boolean(batchnorm));
  kv("loss.wtc", boolean(train.loss.wtc));
  kv("loss.alpha_sup", num(train.loss.alpha_sup));
  kv("loss.alpha_unsup", num(train.loss.alpha_unsup));
  kv("loss.weight_clip_lo", num(train.loss.weight_clip_lo));
  kv("loss.weight_clip_hi", num(train.loss.weight_clip_hi));
  kv("loss.cross_head_mse", num(train.loss.cross_head_mse));
  kv("cum.enabled", boolean(train.cum.enabled));
  kv("cum.threshold", num(train.cum.threshold));
  kv("cum.normalize_weights", boolean(train.cum.normalize_weights));
  kv("aar.sample_fraction", num(aar.sample_fraction));
  kv("aar.cadence_epochs", std::to_string(aar.cadence_epochs));
  kv("aar.rounds", std::to_string(aar_rounds));
  kv("aar.pool_fraction", num(aar_pool_fraction));
  kv("aar.margin", num(aar.dilation.margin));
  kv("aar.dilation_epochs", std::to_string(aar.dilation.epochs));
  kv("aar.dilation_batch", std::to_string(aar.dilation.batch_size));
  kv("aar.bandwidth", num(aar.bandwidth));
  kv("aar.kernel", aar.mean_shift.kernel == Kernel::flat ? "flat" : "gaussian");
  kv("aar.max_iters", std::to_string(aar.mean_shift.max_iters));
  kv("aar.tol", num(aar.mean_shift.tol));
  kv("aar.merge_radius", num(aar.mean_shift.merge_radius));
  kv("experiment.mode", std::string(to_string(mode)));
  kv("experiment.seeds", join_list(seeds, [](std::uint64_t s) { return std::to_string(s); }));
  kv("experiment.ratios", join_list(ratios, [](double r) { return fmt17(r); }));
  kv("experiment.swap_fraction", num(swap_fraction));
  kv("experiment.heldout", join(heldout, ","));
  return o.str();
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  ExperimentConfig c;
  std::size_t line_no = 0;
  for (const auto& raw : split_lines(text)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    c.set(trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file not found: '" + path.string() + "'");
  return parse(read_text_file(path));
}

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData d;
  if (config.schema_path.empty()) {
    d.schema = nsl_kdd_schema();
  } else {
    if (!std::filesystem::exists(config.schema_path))
      throw IoError("schema file not found: '" + config.schema_path + "'");
    d.schema = Schema::load(config.schema_path);
  }
  if (config.standardize) d.schema.standardize = *config.standardize;
  d.schema.validate();
  if (config.data_path.empty()) {
    d.table = make_surrogate_table(config.surrogate);
    d.source = "surrogate";
  } else {
    if (!std::filesystem::exists(config.data_path))
      throw IoError("data file not found: '" + config.data_path + "'");
    d.table = load_csv(config.data_path, d.schema);
    d.source = config.data_path;
  }
  const std::size_t merged = merge_rare_labels(d.table, d.schema);
  log_info("merged " + std::to_string(merged) + " rows into '" + d.schema.merged_label_name + "'");
  if (config.downsample_cap > 0) d.table = downsample(d.table, d.schema, config.downsample_cap, config.downsample_seed);
  log_info("prepared " + std::to_string(d.table.size()) + " rows from " + d.source);
  return d;
}

RBMLPConfig model_config(const ExperimentConfig& config, std::size_t input_dim, std::size_t num_classes) {
  RBMLPConfig m;
  m.input_dim = input_dim;
  m.num_classes = num_classes;
  m.hidden = config.hidden;
  m.residual = config.residual;
  m.batchnorm = config.batchnorm;
  return m;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

TrainConfig seeded(const TrainConfig& t, std::uint64_t seed) {
  TrainConfig c = t;
  c.seed = seed;
  return c;
}

void fill_from(RunResult& r, const DatasetSplit& split) {
  r.class_vocab = split.class_vocab;
  r.labeled = split.labeled_train.size();
  r.unlabeled = split.unlabeled_train.size();
}

// Trains one model; the trainer is returned so protocols can continue it.
RpmTrainer train_split(const ExperimentConfig& config, const DatasetSplit& split, std::uint64_t seed) {
  RBMLPModel model(model_config(config, split.input_dim(), split.num_classes()), seed);
  RpmTrainer trainer(std::move(model), seeded(config.train, seed));
  trainer.run(split, config.train.max_outer_iters);
  trainer.restore_best();
  return trainer;
}

void finish(RunResult& r, const RpmTrainer& trainer, const DatasetSplit& split) {
  const RpmResult res = trainer.result();
  r.history = res.history;
  r.best_iter = res.best_iter;
  r.iters_run = res.history.records.size();
  r.stopped_early = res.stopped_early;
  r.diverged = res.diverged;
  r.metrics = evaluate_model(trainer.model(), split.test);
}

void call_hook(const RunHook& hook, const RunResult& r, const RpmTrainer& t, const PreparedSplit& p) {
  if (hook) hook(r, t.model(), p.split, p.encoder);
}

double mean_recall(const Metrics& m, const std::vector<std::string>& vocab, const std::set<std::string>& classes) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < vocab.size(); ++c) {
    if (!classes.count(vocab[c]) || std::isnan(m.recall[c])) continue;
    sum += m.recall[c];
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

std::set<std::string> heldout_for(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed) {
  if (!config.heldout.empty()) return {config.heldout.begin(), config.heldout.end()};
  return choose_heldout_classes(data.table, data.schema, seed);
}

}  // namespace

RunResult train_and_evaluate(const ExperimentConfig& config, PreparedSplit& prepared, std::uint64_t seed) {
  const auto t0 = Clock::now();
  RunResult r;
  r.seed = seed;
  fill_from(r, prepared.split);
  RpmTrainer trainer = train_split(config, prepared.split, seed);
  finish(r, trainer, prepared.split);
  r.seconds = seconds_since(t0);
  return r;
}

std::size_t swap_labels(LabeledSet& labeled, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 0.5) throw ConfigError("swap fraction must be in [0, 0.5]");
  const std::size_t n = labeled.size();
  const auto pairs = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  if (pairs == 0) return 0;
  Rng rng = Rng::substream(seed, "swap");
  std::vector<std::size_t> picked = rng.sample_indices(n, 2 * pairs);
  rng.shuffle(picked);
  for (std::size_t k = 0; k < pairs; ++k)
    std::swap(labeled.y.labels[picked[2 * k]], labeled.y.labels[picked[2 * k + 1]]);
  return pairs;
}

std::vector<RunResult> run_standard(const ExperimentConfig& config, const PreparedData& data, const RunHook& hook) {
  std::vector<RunResult> out;
  for (std::uint64_t seed : config.seeds) {
    const auto t0 = Clock::now();
    PreparedSplit p = split_dataset(data.table, data.schema, config.split, seed);
    RunResult r;
    r.label = "standard";
    r.seed = seed;
    fill_from(r, p.split);
    RpmTrainer trainer = train_split(config, p.split, seed);
    finish(r, trainer, p.split);
    r.seconds = seconds_since(t0);
    call_hook(hook, r, trainer, p);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RunResult> run_mislabel(const ExperimentConfig& config, const PreparedData& data, const RunHook& hook) {
  std::vector<RunResult> out;
  for (std::uint64_t seed : config.seeds) {
    for (bool corrupt : {false, true}) {
      const auto t0 = Clock::now();
      PreparedSplit p = split_dataset(data.table, data.schema, config.split, seed);
      RunResult r;
      r.label = corrupt ? "mislabel" : "clean";
      r.seed = seed;
      if (corrupt) {
        const std::size_t pairs = swap_labels(p.split.labeled_train, config.swap_fraction, seed);
        log_info("swapped " + std::to_string(pairs) + " label pairs");
        r.extra["swapped_pairs"] = static_cast<double>(pairs);
      }
      fill_from(r, p.split);
      RpmTrainer trainer = train_split(config, p.split, seed);
      finish(r, trainer, p.split);
      r.seconds = seconds_since(t0);
      call_hook(hook, r, trainer, p);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<RunResult> run_unseen(const ExperimentConfig& config, const PreparedData& data, const RunHook& hook) {
  std::vector<RunResult> out;
  for (std::uint64_t seed : config.seeds) {
    const auto t0 = Clock::now();
    const auto held = heldout_for(config, data, seed);
    PreparedSplit p = split_dataset_with_holdout(data.table, data.schema, config.split, held, 0.0, seed);
    RunResult r;
    r.label = "unseen";
    r.seed = seed;
    fill_from(r, p.split);
    RpmTrainer trainer = train_split(config, p.split, seed);
    finish(r, trainer, p.split);
    r.extra["unseen_recall"] = mean_recall(r.metrics, r.class_vocab, held);
    std::set<std::string> seen;
    for (const auto& c : r.class_vocab)
      if (!held.count(c)) seen.insert(c);
    r.extra["seen_recall"] = mean_recall(r.metrics, r.class_vocab, seen);
    r.extra["heldout_classes"] = static_cast<double>(held.size());
    log_info("held out: " + join(std::vector<std::string>(held.begin(), held.end()), ","));
    r.seconds = seconds_since(t0);
    call_hook(hook, r, trainer, p);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RunResult> run_ratio_sweep(const ExperimentConfig& config, const PreparedData& data,
                                       const RunHook& hook) {
  std::vector<RunResult> out;
  for (double ratio : config.ratios) {
    ExperimentConfig c = config;
    c.split.label_ratio = ratio;
    c.train.semi_supervised = config.train.semi_supervised && ratio < 1.0;
    for (auto& r : run_standard(c, data, hook)) {
      r.label = "ratio=" + fmt17(ratio);
      r.extra["label_ratio"] = ratio;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<RunResult> run_ablation(const ExperimentConfig& config, const PreparedData& data, const RunHook& hook) {
  struct Cell {
    const char* label;
    bool rb;
    bool wtc;
    bool cum;
  };
  const Cell cells[] = {
      {"mlp", false, false, config.train.cum.enabled},
      {"mlp+wtc", false, true, config.train.cum.enabled},
      {"rbmlp", true, false, config.train.cum.enabled},
      {"rbmlp+wtc", true, true, config.train.cum.enabled},
      {"rbmlp+wtc-cum", true, true, false},
  };
  std::vector<RunResult> out;
  for (const auto& cell : cells) {
    ExperimentConfig c = config;
    c.residual = cell.rb;
    c.batchnorm = cell.rb;
    c.train.loss.wtc = cell.wtc;
    c.train.cum.enabled = cell.cum;
    for (auto& r : run_standard(c, data, hook)) {
      r.label = cell.label;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<RunResult> run_aar(const ExperimentConfig& config, const PreparedData& data, const RunHook& hook) {
  std::vector<RunResult> out;
  for (std::uint64_t seed : config.seeds) {
    const auto t0 = Clock::now();
    const auto held = heldout_for(config, data, seed);
    PreparedSplit p =
        split_dataset_with_holdout(data.table, data.schema, config.split, held, config.aar_pool_fraction, seed);
    if (p.split.unseen_pool.size() == 0) throw ConfigError("aar: held-out classes left no rows for the unseen pool");
    RunResult r;
    r.label = "aar";
    r.seed = seed;
    const std::size_t labeled_before = p.split.labeled_train.size();
    RpmTrainer trainer = train_split(config, p.split, seed);
    finish(r, trainer, p.split);
    r.extra["epoch0_accuracy"] = r.metrics.accuracy;
    r.extra["epoch0_macro_f1"] = r.metrics.macro_f1;
    r.extra["epoch0_unseen_recall"] = mean_recall(r.metrics, p.split.class_vocab, held);

    AarRoundReport start;
    start.pool_size_before = p.split.unseen_pool.size();
    start.labeled_size_after = labeled_before;
    start.metrics = r.metrics;
    r.aar_rounds.push_back(start);

    std::size_t injected = 0;
    for (std::size_t round = 1; round <= config.aar_rounds; ++round) {
      AarRoundReport rep = aar_round(trainer, p.split, config.aar, round, seed);
      if (rep.pool_exhausted) {
        log_info("aar: unseen pool exhausted after " + std::to_string(round - 1) + " rounds");
        break;
      }
      injected += rep.injected;
      r.aar_rounds.push_back(rep);
      if (trainer.diverged()) break;
    }
    r.metrics = r.aar_rounds.back().metrics;
    r.extra["injected"] = static_cast<double>(injected);
    r.extra["epochs_after_aar"] = static_cast<double>((r.aar_rounds.size() - 1) * config.aar.cadence_epochs);
    r.extra["final_unseen_recall"] = mean_recall(r.metrics, p.split.class_vocab, held);
    fill_from(r, p.split);
    r.history = trainer.history();
    r.iters_run = r.history.records.size();
    r.diverged = trainer.diverged();
    r.seconds = seconds_since(t0);
    call_hook(hook, r, trainer, p);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RunResult> run_experiment(const ExperimentConfig& config, const PreparedData& data,
                                      const RunHook& hook) {
  config.validate();
  switch (config.mode) {
    case ExperimentMode::standard: return run_standard(config, data, hook);
    case ExperimentMode::ratio_sweep: return run_ratio_sweep(config, data, hook);
    case ExperimentMode::ablation: return run_ablation(config, data, hook);
    case ExperimentMode::mislabel: return run_mislabel(config, data, hook);
    case ExperimentMode::unseen: return run_unseen(config, data, hook);
    case ExperimentMode::aar: return run_aar(config, data, hook);
  }
  return {};
}

std::vector<CellSummary> summarize_runs(const std::vector<RunResult>& runs) {
  std::vector<CellSummary> cells;
  for (const auto& r : runs) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const CellSummary& c) { return c.label == r.label; });
    if (it == cells.end()) {
      CellSummary fresh;
      fresh.label = r.label;
      cells.push_back(std::move(fresh));
      it = cells.end() - 1;
    }
    ++it->runs;
  }
  for (auto& c : cells) {
    std::vector<double> acc;
    std::vector<double> psum;
    std::vector<std::size_t> pn;
    for (const auto& r : runs) {
      if (r.label != c.label) continue;
      acc.push_back(r.metrics.accuracy);
      c.macro_f1 += r.metrics.macro_f1;
      c.tpr += r.metrics.tpr;
      c.fpr += r.metrics.fpr;
      psum.resize(r.metrics.precision.size(), 0.0);
      pn.resize(r.metrics.precision.size(), 0);
      for (std::size_t k = 0; k < r.metrics.precision.size(); ++k) {
        if (std::isnan(r.metrics.precision[k])) continue;
        psum[k] += r.metrics.precision[k];
        ++pn[k];
      }
    }
    const auto n = static_cast<double>(c.runs);
    c.accuracy = std::accumulate(acc.begin(), acc.end(), 0.0) / n;
    c.macro_f1 /= n;
    c.tpr /= n;
    c.fpr /= n;
    double var = 0.0;
    for (double a : acc) var += (a - c.accuracy) * (a - c.accuracy);
    c.accuracy_sd = acc.size() > 1 ? std::sqrt(var / static_cast<double>(acc.size() - 1)) : 0.0;
    for (std::size_t k = 0; k < psum.size(); ++k)
      c.precision.push_back(pn[k] ? psum[k] / static_cast<double>(pn[k]) : std::nan(""));
  }
  return cells;
}

namespace {

std::string header_block(const ExperimentConfig& config) {
  std::string out = "# resolved configuration\n";
  for (const auto& line : split_lines(config.to_text())) out += "# " + line + "\n";
  return out;
}

std::string run_key(const RunResult& r) { return r.label + ".seed" + std::to_string(r.seed); }

}  // namespace

std::string metrics_text(const ExperimentConfig& config, const std::vector<RunResult>& runs) {
  std::ostringstream o;
  o << header_block(config);
  for (const auto& r : runs) {
    const std::string k = run_key(r);
    o << k << ".accuracy=" << fmt17(r.metrics.accuracy) << '\n';
    o << k << ".macro_f1=" << fmt17(r.metrics.macro_f1) << '\n';
    o << k << ".tpr=" << fmt17(r.metrics.tpr) << '\n';
    o << k << ".fpr=" << fmt17(r.metrics.fpr) << '\n';
    for (std::size_t c = 0; c < r.class_vocab.size() && c < r.metrics.precision.size(); ++c)
      o << k << ".precision." << r.class_vocab[c] << '=' << fmt17(r.metrics.precision[c]) << '\n';
    o << k << ".labeled=" << r.labeled << '\n';
    o << k << ".unlabeled=" << r.unlabeled << '\n';
    o << k << ".best_iter=" << r.best_iter << '\n';
    o << k << ".iters=" << r.iters_run << '\n';
    o << k << ".diverged=" << (r.diverged ? 1 : 0) << '\n';
    for (const auto& [name, v] : r.extra) o << k << '.' << name << '=' << fmt17(v) << '\n';
    for (std::size_t i = 0; i < r.aar_rounds.size(); ++i) {
      const auto& a = r.aar_rounds[i];
      o << k << ".round" << i << ".accuracy=" << fmt17(a.metrics.accuracy) << '\n';
      o << k << ".round" << i << ".injected=" << a.injected << '\n';
    }
  }
  for (const auto& c : summarize_runs(runs)) {
    o << "mean." << c.label << ".accuracy=" << fmt17(c.accuracy) << '\n';
    o << "mean." << c.label << ".macro_f1=" << fmt17(c.macro_f1) << '\n';
    o << "mean." << c.label << ".tpr=" << fmt17(c.tpr) << '\n';
    o << "mean." << c.label << ".fpr=" << fmt17(c.fpr) << '\n';
  }
  return o.str();
}

std::string metrics_json(const ExperimentConfig& config, const std::vector<RunResult>& runs) {
  using nlohmann::ordered_json;
  ordered_json j;
  ordered_json cfg = ordered_json::object();
  for (const auto& line : split_lines(config.to_text())) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) cfg[line.substr(0, eq)] = line.substr(eq + 3);
  }
  j["config"] = cfg;
  j["seeds"] = config.seeds;
  auto num = [](double v) { return std::isnan(v) ? ordered_json(nullptr) : ordered_json(v); };
  ordered_json arr = ordered_json::array();
  for (const auto& r : runs) {
    ordered_json o;
    o["label"] = r.label;
    o["seed"] = r.seed;
    o["accuracy"] = num(r.metrics.accuracy);
    o["macro_f1"] = num(r.metrics.macro_f1);
    o["tpr"] = num(r.metrics.tpr);
    o["fpr"] = num(r.metrics.fpr);
    ordered_json prec = ordered_json::object();
    for (std::size_t c = 0; c < r.class_vocab.size() && c < r.metrics.precision.size(); ++c)
      prec[r.class_vocab[c]] = num(r.metrics.precision[c]);
    o["precision"] = prec;
    o["labeled"] = r.labeled;
    o["unlabeled"] = r.unlabeled;
    o["best_iter"] = r.best_iter;
    o["iters"] = r.iters_run;
    o["diverged"] = r.diverged;
    ordered_json extra = ordered_json::object();
    for (const auto& [k, v] : r.extra) extra[k] = num(v);
    o["extra"] = extra;
    if (!r.aar_rounds.empty()) {
      ordered_json rounds = ordered_json::array();
      for (const auto& a : r.aar_rounds)
        rounds.push_back({{"round", a.round},
                          {"pool_size", a.pool_size_before},
                          {"injected", a.injected},
                          {"centers", a.center_count},
                          {"labeled", a.labeled_size_after},
                          {"accuracy", num(a.metrics.accuracy)},
                          {"macro_f1", num(a.metrics.macro_f1)}});
      o["aar_rounds"] = rounds;
    }
    arr.push_back(o);
  }
  j["runs"] = arr;
  ordered_json means = ordered_json::array();
  for (const auto& c : summarize_runs(runs))
    means.push_back({{"label", c.label},
                     {"runs", c.runs},
                     {"accuracy", num(c.accuracy)},
                     {"accuracy_sd", num(c.accuracy_sd)},
                     {"macro_f1", num(c.macro_f1)},
                     {"tpr", num(c.tpr)},
                     {"fpr", num(c.fpr)}});
  j["summary"] = means;
  return j.dump(2) + "\n";
}

std::string report_text(const ExperimentConfig& config, const std::vector<RunResult>& runs) {
  std::ostringstream o;
  o << "mode: " << to_string(config.mode) << "\n";
  o << "seeds: " << join_list(config.seeds, [](std::uint64_t s) { return std::to_string(s); }) << "\n\n";
  if (runs.empty()) return o.str();
  const auto& vocab = runs.front().class_vocab;
  char buf[64];
  o << "cell            runs  Acc(%)  F1(%)   TPR(%)  FPR(%)";
  for (const auto& v : vocab) {
    std::snprintf(buf, sizeof buf, " %11s", v.substr(0, 11).c_str());
    o << buf;
  }
  o << '\n';
  for (const auto& c : summarize_runs(runs)) {
    std::snprintf(buf, sizeof buf, "%-15s %4zu  ", c.label.c_str(), c.runs);
    o << buf << percent2(c.accuracy) << "   " << percent2(c.macro_f1) << "   " << percent2(c.tpr) << "   "
      << percent2(c.fpr);
    for (double p : c.precision) {
      std::snprintf(buf, sizeof buf, " %11s", std::isnan(p) ? "-" : percent2(p).c_str());
      o << buf;
    }
    o << '\n';
  }
  for (const auto& r : runs) {
    if (r.aar_rounds.empty()) continue;
    o << "\naar seed " << r.seed << "\n";
    std::ostringstream t;
    write_aar_report(t, r.aar_rounds);
    o << t.str();
  }
  return o.str();
}

std::string timing_text(const std::vector<RunResult>& runs) {
  std::ostringstream o;
  for (const auto& r : runs) o << run_key(r) << ".seconds=" << fmt17(r.seconds) << '\n';
  return o.str();
}

void write_reports(const std::filesystem::path& dir, const ExperimentConfig& config,
                   const std::vector<RunResult>& runs) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "metrics.txt", metrics_text(config, runs));
  write_text_file(dir / "metrics.json", metrics_json(config, runs));
  write_text_file(dir / "report.txt", report_text(config, runs));
  write_text_file(dir / "timing.txt", timing_text(runs));
  for (const auto& r : runs) {
    std::ostringstream log;
    r.history.write_log(log);
    write_text_file(dir / ("train_log." + run_key(r) + ".tsv"), log.str());
    if (!r.aar_rounds.empty()) {
      std::ostringstream a;
      write_aar_report(a, r.aar_rounds);
      write_text_file(dir / ("aar_rounds." + run_key(r) + ".tsv"), a.str());
    }
  }
}

}  // namespace semiwtc
