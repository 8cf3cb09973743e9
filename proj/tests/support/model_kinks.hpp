#pragma once

// ReLU sign pattern of a train-mode RB-MLP forward, rebuilt from the public
// layer API so finite-difference checks can skip entries that cross a kink.

#include <vector>

#include "semiwtc/rbmlp.hpp"

namespace gradcheck {

inline std::vector<bool> relu_signs(const semiwtc::RBMLPModel& m, const semiwtc::Matrix& x) {
  using namespace semiwtc;
  const RBMLPConfig& cfg = m.config();
  std::vector<bool> signs;
  BatchNorm bn = m.batchnorm();
  Matrix a = x;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    Matrix z = dense_forward(a, m.layer(i));
    if (cfg.residual && i + 1 == cfg.residual_tap) z += dense_forward(x, m.shortcut());
    const Activation act = hidden_activation(i);
    if (act == Activation::relu)
      for (Eigen::Index k = 0; k < z.size(); ++k) signs.push_back(z.data()[k] > 0.0f);
    Matrix h = activate(z, act);
    a = (cfg.batchnorm && i + 1 == cfg.batchnorm_after) ? bn.forward(h, Mode::train) : h;
  }
  return signs;
}

}  // namespace gradcheck
