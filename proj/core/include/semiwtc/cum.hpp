#pragma once

// Feature re-weighting for low-confidence samples: inputs of rows whose top
// class probability is at most the threshold are scaled per feature by the
// L2 norm of the matching first-layer weight column.

#include <span>
#include <vector>

#include "semiwtc/netcore.hpp"
#include "semiwtc/types.hpp"

namespace semiwtc {

struct CumConfig {
  bool enabled = true;
  float threshold = 0.75f;
  /// Rescale the column norms to mean 1.
  bool normalize_weights = true;

  void validate() const;
};

/// mask_i = max_j probs_ij <= threshold (inclusive).
std::vector<bool> uncertainty_mask(const Matrix& probs, float threshold);

/// Column L2 norms of the first layer's weight matrix (one per input feature).
RowVector feature_weights(const DenseLayer& first_layer, bool normalize);

/// Masked rows multiplied elementwise by `weights`; other rows unchanged.
Matrix apply_cum(const Matrix& x, const RowVector& weights, const std::vector<bool>& mask);

struct CumGrads {
  Matrix grad_x;
  RowVector grad_weights;
};

/// Gradients of apply_cum given the upstream gradient.
CumGrads apply_cum_backward(const Matrix& grad_out, const Matrix& x, const RowVector& weights,
                            const std::vector<bool>& mask);

std::size_t count_masked(const std::vector<bool>& mask);

}  // namespace semiwtc
