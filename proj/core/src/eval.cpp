#include "semiwtc/eval.hpp"

#include <limits>
#include <numeric>

namespace semiwtc {

void ConfusionMatrix::add(ClassIndex truth, ClassIndex predicted) {
  if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= classes_ ||
      static_cast<std::size_t>(predicted) >= classes_) {
    throw DimensionError("confusion: class index out of range (truth " + std::to_string(truth) + ", predicted " +
                         std::to_string(predicted) + ", C=" + std::to_string(classes_) + ")");
  }
  ++counts_[static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(predicted)];
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::fp(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < classes_; ++t)
    if (t != c) s += at(t, c);
  return s;
}

std::uint64_t ConfusionMatrix::fn(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes_; ++p)
    if (p != c) s += at(c, p);
  return s;
}

ConfusionMatrix confusion(std::span<const ClassIndex> preds, std::span<const ClassIndex> labels,
                          std::size_t num_classes) {
  if (preds.size() != labels.size())
    throw DimensionError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) cm.add(labels[i], preds[i]);
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw DomainError("accuracy of an empty confusion matrix is undefined");
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) trace += cm.tp(c);
  return static_cast<double>(trace) / static_cast<double>(total);
}

double macro_f1(const ConfusionMatrix& cm) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const auto denom = 2 * cm.tp(c) + cm.fp(c) + cm.fn(c);
    if (denom == 0) continue;
    sum += 2.0 * static_cast<double>(cm.tp(c)) / static_cast<double>(denom);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double tpr(const ConfusionMatrix& cm) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const auto support = cm.support(c);
    if (support == 0) continue;
    sum += static_cast<double>(cm.tp(c)) / static_cast<double>(support);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double fpr(const ConfusionMatrix& cm) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const auto negatives = cm.fp(c) + cm.tn(c);
    if (negatives == 0) continue;
    sum += static_cast<double>(cm.fp(c)) / static_cast<double>(negatives);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double precision(const ConfusionMatrix& cm, std::size_t c) {
  const auto predicted = cm.tp(c) + cm.fp(c);
  if (predicted == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(cm.tp(c)) / static_cast<double>(predicted);
}

double recall(const ConfusionMatrix& cm, std::size_t c) {
  const auto support = cm.support(c);
  if (support == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(cm.tp(c)) / static_cast<double>(support);
}

Metrics summarize(const ConfusionMatrix& cm) {
  Metrics m;
  m.accuracy = accuracy(cm);
  m.macro_f1 = macro_f1(cm);
  m.tpr = tpr(cm);
  m.fpr = fpr(cm);
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    m.precision.push_back(precision(cm, c));
    m.recall.push_back(recall(cm, c));
  }
  return m;
}

std::vector<ClassIndex> argmax_rows(const Matrix& probs) {
  std::vector<ClassIndex> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < probs.cols(); ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<ClassIndex>(best);
  }
  return out;
}

std::vector<float> max_rows(const Matrix& probs) {
  std::vector<float> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) out[static_cast<std::size_t>(i)] = probs.row(i).maxCoeff();
  return out;
}

}  // namespace semiwtc
