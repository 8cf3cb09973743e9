#pragma once

// Recurrent prototype training: fit the supervised head on labeled rows,
// pseudo-label the unlabeled pool with it, fit the unsupervised head on the
// pseudo-labels, and repeat until validation Macro-F1 stops improving.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semiwtc/cum.hpp"
#include "semiwtc/dataflow.hpp"
#include "semiwtc/eval.hpp"
#include "semiwtc/losses.hpp"
#include "semiwtc/netcore.hpp"
#include "semiwtc/rbmlp.hpp"
#include "semiwtc/rng.hpp"

namespace semiwtc {

/// How head parameters move between the two branches around a pseudo-label
/// phase: not at all, supervised into unsupervised before it, or also back
/// afterwards.
enum class HeadPassing { none, to_unsup, both };

std::string_view to_string(HeadPassing p);
HeadPassing parse_head_passing(std::string_view s);

struct TrainConfig {
  std::size_t batch_size = 2000;
  std::size_t max_outer_iters = 100;
  /// Outer iterations without a validation Macro-F1 improvement before stopping.
  std::size_t patience = 10;
  /// Labeled-data epochs run once before the first pseudo-labelling pass.
  std::size_t warmup_epochs = 0;
  /// Labeled-data epochs per outer iteration.
  std::size_t sup_epochs = 1;
  /// Pseudo-labeled epochs per outer iteration.
  std::size_t unsup_epochs = 1;
  /// When false the pseudo-label phases are skipped (supervised baseline).
  bool semi_supervised = true;
  HeadPassing head_passing = HeadPassing::both;
  AdamConfig adam;
  LossConfig loss;
  CumConfig cum;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PseudoLabels {
  std::vector<ClassIndex> labels;
  std::vector<float> confidence;
  std::size_t size() const { return labels.size(); }
};

struct EpochRecord {
  std::size_t iter = 0;
  std::size_t epoch = 0;  // cumulative data epochs (labeled + pseudo)
  double sup_loss = 0.0;
  double unsup_loss = 0.0;
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> records;

  /// Index into `records` of the best validation Macro-F1 (first on ties).
  std::optional<std::size_t> best_index() const;
  /// Tab-separated: iter, epoch, sup_loss, unsup_loss, val_acc, val_f1.
  void write_log(std::ostream& out) const;
};

struct RpmResult {
  RBMLPModel model;
  TrainHistory history;
  std::size_t best_iter = 0;
  bool stopped_early = false;
  bool diverged = false;
  std::string error;
};

/// Eval-mode supervised-head metrics on a labeled set.
Metrics evaluate_model(const RBMLPModel& model, const LabeledSet& data);
ConfusionMatrix confusion_for(const RBMLPModel& model, const LabeledSet& data);
std::vector<ClassIndex> predict(const RBMLPModel& model, const Matrix& x, Head head = Head::sup);

/// Owns the model, optimizer and shuffling stream for one training run, so
/// that training can be resumed (e.g. between active-resampling rounds).
class RpmTrainer {
 public:
  RpmTrainer(RBMLPModel model, TrainConfig config);

  /// Minibatch training of the supervised head on labeled rows; returns the
  /// mean batch loss of the last epoch (0 when epochs == 0).
  double train_prototype(const LabeledSet& labeled, std::size_t epochs);
  PseudoLabels generate_pseudo_labels(const UnlabeledSet& unlabeled) const;
  /// Unsupervised-head training on pseudo-labels, with head passing around it.
  double train_with_pseudo(const UnlabeledSet& unlabeled, const PseudoLabels& pseudo, std::size_t epochs);

  /// One outer iteration followed by validation.
  EpochRecord iterate(const DatasetSplit& split);
  /// Runs outer iterations until early stop or `max_iters`; tracks the best
  /// validation checkpoint across calls.
  void run(const DatasetSplit& split, std::size_t max_iters, bool early_stop = true);

  RpmResult result() const;

  RBMLPModel& model() { return model_; }
  const RBMLPModel& model() const { return model_; }
  const RBMLPModel& best_model() const { return best_ ? *best_ : model_; }
  Adam& optimizer() { return adam_; }
  const TrainConfig& config() const { return config_; }
  TrainConfig& config() { return config_; }
  const TrainHistory& history() const { return history_; }
  std::size_t epochs_run() const { return epochs_; }
  bool diverged() const { return diverged_; }
  /// Restores the best validation checkpoint into the live model.
  void restore_best();

 private:
  double run_epoch(const Matrix& x, std::span<const ClassIndex> targets, Head head);
  std::vector<std::vector<std::size_t>> batches(std::size_t n);

  RBMLPModel model_;
  TrainConfig config_;
  Adam adam_;
  Rng shuffle_rng_;
  TrainHistory history_;
  std::optional<RBMLPModel> best_;
  double best_f1_ = -1.0;
  std::size_t best_iter_ = 0;
  std::size_t stall_ = 0;
  std::size_t epochs_ = 0;
  bool warmed_up_ = false;
  bool stopped_early_ = false;
  bool diverged_ = false;
  std::string error_;
};

double train_prototype(RBMLPModel& model, const LabeledSet& labeled, const TrainConfig& config,
                       std::size_t epochs = 1);
PseudoLabels generate_pseudo_labels(const RBMLPModel& model, const UnlabeledSet& unlabeled);
double train_with_pseudo(RBMLPModel& model, const UnlabeledSet& unlabeled, const PseudoLabels& pseudo,
                         const TrainConfig& config, std::size_t epochs = 1);
RpmResult rpm_loop(RBMLPModel model, const DatasetSplit& split, const TrainConfig& config);

}  // namespace semiwtc
