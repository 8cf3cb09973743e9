#include "semiwtc/rpm.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "semiwtc/log.hpp"

namespace semiwtc {

std::string_view to_string(HeadPassing p) {
  switch (p) {
    case HeadPassing::none: return "none";
    case HeadPassing::to_unsup: return "to_unsup";
    case HeadPassing::both: return "both";
  }
  return "none";
}

HeadPassing parse_head_passing(std::string_view s) {
  if (s == "none") return HeadPassing::none;
  if (s == "to_unsup") return HeadPassing::to_unsup;
  if (s == "both") return HeadPassing::both;
  throw ConfigError("head passing must be none, to_unsup or both");
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (!(adam.lr >= 0.0f)) throw ConfigError("learning rate must be non-negative");
  loss.validate();
  cum.validate();
}

std::optional<std::size_t> TrainHistory::best_index() const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!best || records[i].val_macro_f1 > records[*best].val_macro_f1) best = i;
  return best;
}

void TrainHistory::write_log(std::ostream& out) const {
  out << "iter\tepoch\tsup_loss\tunsup_loss\tval_acc\tval_f1\n";
  for (const auto& r : records) {
    out << r.iter << '\t' << r.epoch << '\t' << r.sup_loss << '\t' << r.unsup_loss << '\t' << r.val_accuracy << '\t'
        << r.val_macro_f1 << '\n';
  }
}

std::vector<ClassIndex> predict(const RBMLPModel& model, const Matrix& x, Head head) {
  return argmax_rows(model.infer_probs(x, head));
}

ConfusionMatrix confusion_for(const RBMLPModel& model, const LabeledSet& data) {
  return confusion(predict(model, data.x.data), data.y.labels, model.config().num_classes);
}

Metrics evaluate_model(const RBMLPModel& model, const LabeledSet& data) {
  return summarize(confusion_for(model, data));
}

namespace {

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace

RpmTrainer::RpmTrainer(RBMLPModel model, TrainConfig config)
    : model_(std::move(model)),
      config_(std::move(config)),
      adam_(config_.adam),
      shuffle_rng_(Rng::substream(config_.seed, "shuffle")) {
  config_.validate();
}

std::vector<std::vector<std::size_t>> RpmTrainer::batches(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle_rng_.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += config_.batch_size) {
    const std::size_t end = std::min(n, start + config_.batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  // Batch norm needs two rows; fold a singleton tail into the previous batch.
  if (out.size() > 1 && out.back().size() < 2) {
    auto tail = std::move(out.back());
    out.pop_back();
    out.back().insert(out.back().end(), tail.begin(), tail.end());
  }
  return out;
}

double RpmTrainer::run_epoch(const Matrix& x, std::span<const ClassIndex> targets, Head head) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  if (n == 0) return 0.0;
  double total = 0.0;
  std::size_t count = 0;
  std::vector<ClassIndex> yb;
  for (const auto& idx : batches(n)) {
    Matrix xb = gather_rows(x, idx);
    yb.clear();
    for (std::size_t i : idx) yb.push_back(targets[i]);
    if (config_.cum.enabled) {
      // Confidence comes from the head that consumes this batch, before the step.
      const auto mask = uncertainty_mask(model_.infer_probs(xb, head), config_.cum.threshold);
      if (count_masked(mask) > 0)
        xb = apply_cum(xb, feature_weights(model_.first_layer(), config_.cum.normalize_weights), mask);
    }
    std::optional<Matrix> target;
    if (head == Head::unsup && config_.loss.cross_head_mse > 0.0f) target = model_.infer_probs(xb, Head::sup);
    total += backward_and_step(model_, adam_, xb, yb, head, config_.loss, target ? &*target : nullptr);
    ++count;
  }
  return total / static_cast<double>(count);
}

double RpmTrainer::train_prototype(const LabeledSet& labeled, std::size_t epochs) {
  if (labeled.size() == 0) throw ConfigError("train_prototype: labeled set is empty");
  if (epochs > 0) {
    std::set<ClassIndex> distinct(labeled.y.labels.begin(), labeled.y.labels.end());
    if (distinct.size() == 1) log_warn("labeled set holds a single class; class weights are degenerate");
  }
  double loss = 0.0;
  for (std::size_t e = 0; e < epochs; ++e) {
    loss = run_epoch(labeled.x.data, labeled.y.labels, Head::sup);
    ++epochs_;
  }
  return loss;
}

PseudoLabels RpmTrainer::generate_pseudo_labels(const UnlabeledSet& unlabeled) const {
  return semiwtc::generate_pseudo_labels(model_, unlabeled);
}

double RpmTrainer::train_with_pseudo(const UnlabeledSet& unlabeled, const PseudoLabels& pseudo, std::size_t epochs) {
  if (pseudo.size() != unlabeled.size())
    throw DimensionError("train_with_pseudo: pseudo-labels do not cover the unlabeled set");
  if (epochs == 0 || unlabeled.size() == 0) return 0.0;
  if (config_.head_passing != HeadPassing::none) model_.copy_head(Head::sup, Head::unsup);
  double loss = 0.0;
  for (std::size_t e = 0; e < epochs; ++e) {
    loss = run_epoch(unlabeled.x.data, pseudo.labels, Head::unsup);
    ++epochs_;
  }
  if (config_.head_passing == HeadPassing::both) model_.copy_head(Head::unsup, Head::sup);
  return loss;
}

EpochRecord RpmTrainer::iterate(const DatasetSplit& split) {
  if (!warmed_up_) {
    train_prototype(split.labeled_train, config_.warmup_epochs);
    warmed_up_ = true;
  }
  EpochRecord rec;
  rec.iter = history_.records.size() + 1;
  rec.sup_loss = train_prototype(split.labeled_train, config_.sup_epochs);
  if (config_.semi_supervised && split.unlabeled_train.size() > 0) {
    const PseudoLabels pseudo = generate_pseudo_labels(split.unlabeled_train);
    rec.unsup_loss = train_with_pseudo(split.unlabeled_train, pseudo, config_.unsup_epochs);
  }
  rec.epoch = epochs_;
  if (split.validation.size() > 0) {
    const Metrics m = evaluate_model(model_, split.validation);
    rec.val_accuracy = m.accuracy;
    rec.val_macro_f1 = m.macro_f1;
  }
  history_.records.push_back(rec);
  if (rec.val_macro_f1 > best_f1_) {
    best_f1_ = rec.val_macro_f1;
    best_ = model_;
    best_iter_ = rec.iter;
    stall_ = 0;
  } else {
    ++stall_;
  }
  log_debug("iter " + std::to_string(rec.iter) + " val_f1 " + std::to_string(rec.val_macro_f1));
  return rec;
}

void RpmTrainer::run(const DatasetSplit& split, std::size_t max_iters, bool early_stop) {
  stall_ = 0;
  stopped_early_ = false;
  for (std::size_t i = 0; i < max_iters; ++i) {
    try {
      iterate(split);
    } catch (const NumericError& e) {
      diverged_ = true;
      error_ = e.what();
      log_warn(std::string("training diverged: ") + e.what());
      return;
    }
    if (early_stop && stall_ >= config_.patience) {
      stopped_early_ = true;
      return;
    }
  }
}

void RpmTrainer::restore_best() {
  if (best_) model_ = *best_;
}

RpmResult RpmTrainer::result() const {
  return RpmResult{best_model(), history_, best_iter_, stopped_early_, diverged_, error_};
}

double train_prototype(RBMLPModel& model, const LabeledSet& labeled, const TrainConfig& config, std::size_t epochs) {
  RpmTrainer t(model, config);
  const double loss = t.train_prototype(labeled, epochs);
  model = std::move(t.model());
  return loss;
}

PseudoLabels generate_pseudo_labels(const RBMLPModel& model, const UnlabeledSet& unlabeled) {
  PseudoLabels out;
  if (unlabeled.size() == 0) return out;
  const Matrix p = model.infer_probs(unlabeled.x.data, Head::sup);
  out.labels = argmax_rows(p);
  out.confidence = max_rows(p);
  return out;
}

double train_with_pseudo(RBMLPModel& model, const UnlabeledSet& unlabeled, const PseudoLabels& pseudo,
                         const TrainConfig& config, std::size_t epochs) {
  RpmTrainer t(model, config);
  const double loss = t.train_with_pseudo(unlabeled, pseudo, epochs);
  model = std::move(t.model());
  return loss;
}

RpmResult rpm_loop(RBMLPModel model, const DatasetSplit& split, const TrainConfig& config) {
  RpmTrainer t(std::move(model), config);
  t.run(split, config.max_outer_iters);
  return t.result();
}

}  // namespace semiwtc
