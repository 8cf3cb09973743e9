#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "semiwtc/types.hpp"

namespace semiwtc {

/// C x C counts; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes)
      : classes_(num_classes), counts_(num_classes * num_classes, 0) {}

  void add(ClassIndex truth, ClassIndex predicted);

  std::size_t num_classes() const { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
  std::uint64_t total() const;

  std::uint64_t tp(std::size_t c) const { return at(c, c); }
  std::uint64_t fp(std::size_t c) const;
  std::uint64_t fn(std::size_t c) const;
  std::uint64_t tn(std::size_t c) const { return total() - tp(c) - fp(c) - fn(c); }
  std::uint64_t support(std::size_t c) const { return tp(c) + fn(c); }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion(std::span<const ClassIndex> preds, std::span<const ClassIndex> labels,
                          std::size_t num_classes);

/// trace / total. Throws DomainError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);
/// Mean of 2TP/(2TP+FP+FN) over classes that occur as truth or prediction.
double macro_f1(const ConfusionMatrix& cm);
/// Mean recall over classes with support.
double tpr(const ConfusionMatrix& cm);
/// Mean FP/(FP+TN) over classes that have negatives.
double fpr(const ConfusionMatrix& cm);
/// TP/(TP+FP); NaN when the class is never predicted.
double precision(const ConfusionMatrix& cm, std::size_t c);
/// TP/(TP+FN); NaN when the class has no support.
double recall(const ConfusionMatrix& cm, std::size_t c);

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
};

Metrics summarize(const ConfusionMatrix& cm);

/// Row-wise argmax; ties resolve to the lowest class index.
std::vector<ClassIndex> argmax_rows(const Matrix& probs);
std::vector<float> max_rows(const Matrix& probs);

}  // namespace semiwtc
