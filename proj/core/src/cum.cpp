#include "semiwtc/cum.hpp"

#include <algorithm>

namespace semiwtc {

void CumConfig::validate() const {
  if (!(threshold > 0.0f && threshold < 1.0f)) throw ConfigError("cum threshold must be in (0, 1)");
}

std::vector<bool> uncertainty_mask(const Matrix& probs, float threshold) {
  std::vector<bool> mask(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) mask[static_cast<std::size_t>(i)] = probs.row(i).maxCoeff() <= threshold;
  return mask;
}

RowVector feature_weights(const DenseLayer& first_layer, bool normalize) {
  const Matrix& W = first_layer.weight().value;  // out x in
  RowVector w(W.cols());
  for (Eigen::Index d = 0; d < W.cols(); ++d) w(d) = static_cast<float>(W.col(d).cast<double>().norm());
  if (normalize) {
    const double mean = w.cast<double>().mean();
    if (mean > 0.0) w /= static_cast<float>(mean);
  }
  return w;
}

Matrix apply_cum(const Matrix& x, const RowVector& weights, const std::vector<bool>& mask) {
  if (weights.size() != x.cols()) throw DimensionError("apply_cum: weight length does not match feature count");
  if (mask.size() != static_cast<std::size_t>(x.rows())) throw DimensionError("apply_cum: mask length mismatch");
  Matrix out = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    if (mask[static_cast<std::size_t>(i)]) out.row(i) = x.row(i).cwiseProduct(weights);
  return out;
}

CumGrads apply_cum_backward(const Matrix& grad_out, const Matrix& x, const RowVector& weights,
                            const std::vector<bool>& mask) {
  if (grad_out.rows() != x.rows() || grad_out.cols() != x.cols())
    throw DimensionError("apply_cum_backward: shape mismatch");
  CumGrads g{grad_out, RowVector::Zero(x.cols())};
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    g.grad_x.row(i) = grad_out.row(i).cwiseProduct(weights);
    g.grad_weights += grad_out.row(i).cwiseProduct(x.row(i));
  }
  return g;
}

std::size_t count_masked(const std::vector<bool>& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

}  // namespace semiwtc
