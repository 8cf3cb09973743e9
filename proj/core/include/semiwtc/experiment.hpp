#pragma once

// Experiment protocols and their configuration: standard runs, label-ratio
// sweeps, architecture/loss/CUM ablations, mislabel injection, unseen-class
// holdout and active-resampling rounds.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "semiwtc/aar.hpp"
#include "semiwtc/dataflow.hpp"
#include "semiwtc/rbmlp.hpp"
#include "semiwtc/rpm.hpp"
#include "semiwtc/synth.hpp"

namespace semiwtc {

enum class ExperimentMode { standard, ratio_sweep, ablation, mislabel, unseen, aar };

std::string_view to_string(ExperimentMode mode);
ExperimentMode parse_mode(std::string_view text);

/// Flat `section.key = value` configuration. Unknown keys are errors.
struct ExperimentConfig {
  // data.*: an empty path selects the synthetic surrogate, an empty schema
  // the built-in NSL-KDD layout.
  std::string data_path;
  std::string schema_path;
  std::size_t downsample_cap = 5000;
  std::uint64_t downsample_seed = 0;
  /// Overrides the schema's standardize directive when set.
  std::optional<bool> standardize;
  SurrogateConfig surrogate;

  SplitRatios split;
  TrainConfig train;
  std::vector<std::size_t> hidden{256, 128, 64, 32};
  bool residual = true;
  bool batchnorm = true;
  AarConfig aar;
  std::size_t aar_rounds = 6;
  /// Share of held-out rows routed to the resampling pool instead of test.
  double aar_pool_fraction = 0.8;

  ExperimentMode mode = ExperimentMode::standard;
  std::vector<std::uint64_t> seeds{1};
  std::vector<double> ratios{0.005, 0.01, 0.05, 0.10};
  double swap_fraction = 0.10;
  /// Explicit held-out classes; empty picks ceil(N/10) at random per seed.
  std::vector<std::string> heldout;

  void set(const std::string& key, const std::string& value);
  void validate() const;
  /// Every key with its resolved value, one per line, in a fixed order.
  std::string to_text() const;

  static ExperimentConfig parse(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);
};

/// Loaded, label-merged and downsampled table with its schema.
struct PreparedData {
  Schema schema;
  RawTable table;
  std::string source;  // file path or "surrogate"
};

PreparedData prepare_data(const ExperimentConfig& config);

RBMLPConfig model_config(const ExperimentConfig& config, std::size_t input_dim, std::size_t num_classes);

struct RunResult {
  std::string label;  // cell or ratio name within the experiment
  std::uint64_t seed = 0;
  Metrics metrics;
  std::vector<std::string> class_vocab;
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;
  std::size_t best_iter = 0;
  std::size_t iters_run = 0;
  bool stopped_early = false;
  bool diverged = false;
  double seconds = 0.0;
  /// Protocol-specific values (e.g. swapped pairs, unseen recall).
  std::map<std::string, double> extra;
  std::vector<AarRoundReport> aar_rounds;
  TrainHistory history;
};

/// Called after each run with the trained model and its split, so a driver
/// can write checkpoints and manifests.
using RunHook = std::function<void(const RunResult&, const RBMLPModel&, const DatasetSplit&, const Encoder&)>;

/// Trains and evaluates on one prepared split.
RunResult train_and_evaluate(const ExperimentConfig& config, PreparedSplit& prepared, std::uint64_t seed);

/// Swaps labels between floor(fraction * n) disjoint random pairs of the
/// labeled training set; returns the number of pairs.
std::size_t swap_labels(LabeledSet& labeled, double fraction, std::uint64_t seed);

std::vector<RunResult> run_standard(const ExperimentConfig& config, const PreparedData& data,
                                    const RunHook& hook = {});
std::vector<RunResult> run_mislabel(const ExperimentConfig& config, const PreparedData& data,
                                    const RunHook& hook = {});
std::vector<RunResult> run_unseen(const ExperimentConfig& config, const PreparedData& data,
                                  const RunHook& hook = {});
std::vector<RunResult> run_ratio_sweep(const ExperimentConfig& config, const PreparedData& data,
                                       const RunHook& hook = {});
/// Cells: mlp, mlp+wtc, rbmlp, rbmlp+wtc (all with CUM as configured) and
/// rbmlp+wtc-cum with CUM off.
std::vector<RunResult> run_ablation(const ExperimentConfig& config, const PreparedData& data,
                                    const RunHook& hook = {});
std::vector<RunResult> run_aar(const ExperimentConfig& config, const PreparedData& data, const RunHook& hook = {});

std::vector<RunResult> run_experiment(const ExperimentConfig& config, const PreparedData& data,
                                      const RunHook& hook = {});

struct CellSummary {
  std::string label;
  std::size_t runs = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double accuracy_sd = 0.0;
  std::vector<double> precision;  // per class, NaN entries skipped in the mean
};

/// Per-label means over seeds, in first-appearance order.
std::vector<CellSummary> summarize_runs(const std::vector<RunResult>& runs);

/// key=value lines preceded by a '#' header with the resolved config. Values
/// are printed with 17 significant digits; timings are excluded.
std::string metrics_text(const ExperimentConfig& config, const std::vector<RunResult>& runs);
std::string metrics_json(const ExperimentConfig& config, const std::vector<RunResult>& runs);
/// Human-readable table with per-class precision columns.
std::string report_text(const ExperimentConfig& config, const std::vector<RunResult>& runs);
std::string timing_text(const std::vector<RunResult>& runs);

/// Writes metrics.txt, metrics.json, report.txt, timing.txt, per-run training
/// logs and AAR round reports into `dir`.
void write_reports(const std::filesystem::path& dir, const ExperimentConfig& config,
                   const std::vector<RunResult>& runs);

}  // namespace semiwtc
