#pragma once

#include <span>
#include <vector>

#include "semiwtc/types.hpp"

namespace semiwtc {

/// Per-class loss coefficients.
struct ClassWeights {
  std::vector<float> delta;

  static ClassWeights ones(std::size_t num_classes) { return {std::vector<float>(num_classes, 1.0f)}; }
  std::size_t size() const { return delta.size(); }
};

struct LossConfig {
  float alpha_sup = 0.2f;
  float alpha_unsup = 0.2f;
  float weight_clip_lo = 0.1f;
  float weight_clip_hi = 10.0f;
  /// Off: plain cross-entropy with unit class weights and no MSE term.
  bool wtc = true;
  /// Weight of an optional consistency term between the two heads'
  /// probabilities, added in the pseudo-label phase. Zero disables it.
  float cross_head_mse = 0.0f;

  void validate() const;
};

struct MarginConfig {
  float margin = 1.0f;
};

inline constexpr float kProbFloor = 1e-12f;

struct LossGrad {
  double value = 0.0;
  /// dL/dp, same shape as the probability matrix.
  Matrix grad;
};

/// One-hot rows for class indices.
Matrix one_hot(std::span<const ClassIndex> labels, std::size_t num_classes);

/// -(1/N) sum_i sum_j y_ij delta_j log max(p_ij, 1e-12)
double cce(const Matrix& p, std::span<const ClassIndex> y, const ClassWeights& delta);
/// (1/N) sum_i ||y_i - p_i||^2
double mse(const Matrix& p, std::span<const ClassIndex> y);
/// cce(p, y, delta) + alpha * mse(p, y)
double wtc_loss(const Matrix& p, std::span<const ClassIndex> y, const ClassWeights& delta, float alpha);

LossGrad cce_grad(const Matrix& p, std::span<const ClassIndex> y, const ClassWeights& delta);
LossGrad mse_grad(const Matrix& p, std::span<const ClassIndex> y);
LossGrad wtc_loss_grad(const Matrix& p, std::span<const ClassIndex> y, const ClassWeights& delta, float alpha);

/// (1/N) sum_i ||p_i - q_i||^2 with q held constant.
LossGrad prob_mse_grad(const Matrix& p, const Matrix& q);

/// delta_j = N / (C * n_j) clipped to [lo, hi] for classes present in the
/// batch; 1 for absent classes.
ClassWeights class_weights_from_batch(std::span<const ClassIndex> labels, std::size_t num_classes, float lo = 0.1f,
                                      float hi = 10.0f);

/// sum over ordered pairs i != j of max(0, M - (1 - cos(X_i, X_j))).
/// Rows of `class_feats` are the per-class vectors. Throws DomainError on a
/// zero-norm row.
double dilation_loss(const Matrix& class_feats, float margin);
LossGrad dilation_loss_grad(const Matrix& class_feats, float margin);

}  // namespace semiwtc
