#pragma once

#include <cstdint>

#include "semiwtc/rng.hpp"
#include "semiwtc/types.hpp"

namespace fixtures {

inline semiwtc::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  semiwtc::Rng rng(seed);
  semiwtc::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(scale * rng.normal());
  return m;
}

/// Random rows on the probability simplex.
inline semiwtc::Matrix random_probs(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  semiwtc::Rng rng(seed);
  semiwtc::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<float>(0.05 + rng.uniform());
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

}  // namespace fixtures
