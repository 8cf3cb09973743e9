#include "semiwtc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace semiwtc {

void LossConfig::validate() const {
  if (alpha_sup < 0.0f || alpha_unsup < 0.0f) throw ConfigError("loss alphas must be non-negative");
  if (!(weight_clip_lo <= weight_clip_hi)) throw ConfigError("weight clip lo must not exceed hi");
  if (cross_head_mse < 0.0f) throw ConfigError("cross_head_mse must be non-negative");
}

namespace {

void check_shapes(const Matrix& p, std::span<const ClassIndex> y, std::size_t num_weights) {
  if (static_cast<std::size_t>(p.rows()) != y.size())
    throw DimensionError("loss: " + std::to_string(p.rows()) + " prediction rows vs " + std::to_string(y.size()) +
                         " labels");
  if (num_weights != 0 && static_cast<std::size_t>(p.cols()) != num_weights)
    throw DimensionError("loss: class weight count does not match probability width");
  for (ClassIndex c : y)
    if (c < 0 || c >= p.cols()) throw DimensionError("loss: label " + std::to_string(c) + " out of range");
}

}  // namespace

Matrix one_hot(std::span<const ClassIndex> labels, std::size_t num_classes) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
      throw DimensionError("one_hot: label out of range");
    m(static_cast<Eigen::Index>(i), labels[i]) = 1.0f;
  }
  return m;
}

double cce(const Matrix& p, std::span<const ClassIndex> y, const ClassWeights& delta) {
  check_shapes(p, y, delta.size());
  if (y.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const float pij = std::max(p(static_cast<Eigen::Index>(i), y[i]), kProbFloor);
    sum += static_cast<double>(delta.delta[static_cast<std::size_t>(y[i])]) * std::log(static_cast<double>(pij));
  }
  return -sum / static_cast<double>(y.size());
}

double mse(const Matrix& p, std::span<const ClassIndex> y) {
  check_shapes(p, y, 0);
  if (y.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double d = (j == y[i] ? 1.0 : 0.0) - static_cast<double>(p(r, j));
      sum += d * d;
    }
  }
  return sum / static_cast<double>(y.size());
}

double wtc_loss(const Matrix& p, std::span<const ClassIndex> y, const ClassWeights& delta, float alpha) {
  double v = cce(p, y, delta);
  if (alpha != 0.0f) v += static_cast<double>(alpha) * mse(p, y);
  return v;
}

LossGrad cce_grad(const Matrix& p, std::span<const ClassIndex> y, const ClassWeights& delta) {
  LossGrad out{cce(p, y, delta), Matrix::Zero(p.rows(), p.cols())};
  if (y.empty()) return out;
  const float inv_n = 1.0f / static_cast<float>(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const float pij = p(r, y[i]);
    // The clamp is flat below the floor.
    if (pij >= kProbFloor) out.grad(r, y[i]) = -delta.delta[static_cast<std::size_t>(y[i])] * inv_n / pij;
  }
  return out;
}

LossGrad mse_grad(const Matrix& p, std::span<const ClassIndex> y) {
  LossGrad out{mse(p, y), Matrix()};
  if (y.empty()) {
    out.grad = Matrix::Zero(p.rows(), p.cols());
    return out;
  }
  const float scale = 2.0f / static_cast<float>(y.size());
  out.grad = (p - one_hot(y, static_cast<std::size_t>(p.cols()))) * scale;
  return out;
}

LossGrad wtc_loss_grad(const Matrix& p, std::span<const ClassIndex> y, const ClassWeights& delta, float alpha) {
  LossGrad out = cce_grad(p, y, delta);
  if (alpha != 0.0f) {
    LossGrad m = mse_grad(p, y);
    out.value += static_cast<double>(alpha) * m.value;
    out.grad += alpha * m.grad;
  }
  return out;
}

LossGrad prob_mse_grad(const Matrix& p, const Matrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw DimensionError("prob_mse: shape mismatch");
  LossGrad out;
  if (p.rows() == 0) {
    out.grad = Matrix::Zero(p.rows(), p.cols());
    return out;
  }
  const Matrix d = p - q;
  out.value = static_cast<double>(d.cast<double>().squaredNorm()) / static_cast<double>(p.rows());
  out.grad = d * (2.0f / static_cast<float>(p.rows()));
  return out;
}

ClassWeights class_weights_from_batch(std::span<const ClassIndex> labels, std::size_t num_classes, float lo,
                                      float hi) {
  if (labels.empty()) throw DomainError("class_weights_from_batch: empty batch");
  std::vector<std::size_t> counts(num_classes, 0);
  for (ClassIndex c : labels) {
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) throw DimensionError("class weight: label out of range");
    ++counts[static_cast<std::size_t>(c)];
  }
  ClassWeights w = ClassWeights::ones(num_classes);
  const double n = static_cast<double>(labels.size());
  const double c = static_cast<double>(num_classes);
  for (std::size_t j = 0; j < num_classes; ++j) {
    if (counts[j] == 0) continue;
    const double raw = n / (c * static_cast<double>(counts[j]));
    w.delta[j] = static_cast<float>(std::clamp(raw, static_cast<double>(lo), static_cast<double>(hi)));
  }
  return w;
}

namespace {

std::vector<double> row_norms(const Matrix& x) {
  std::vector<double> norms(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    norms[static_cast<std::size_t>(i)] = x.row(i).cast<double>().norm();
    if (!(norms[static_cast<std::size_t>(i)] > 0.0))
      throw DomainError("dilation loss: class vector " + std::to_string(i) + " has zero norm");
  }
  return norms;
}

}  // namespace

double dilation_loss(const Matrix& class_feats, float margin) {
  const auto norms = row_norms(class_feats);
  double total = 0.0;
  for (Eigen::Index i = 0; i < class_feats.rows(); ++i) {
    for (Eigen::Index j = 0; j < class_feats.rows(); ++j) {
      if (i == j) continue;
      const double cos = class_feats.row(i).cast<double>().dot(class_feats.row(j).cast<double>()) /
                         (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
      total += std::max(0.0, static_cast<double>(margin) - (1.0 - cos));
    }
  }
  return total;
}

LossGrad dilation_loss_grad(const Matrix& class_feats, float margin) {
  const auto norms = row_norms(class_feats);
  const Eigen::Index k = class_feats.rows();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(k, class_feats.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::RowVectorXd a = class_feats.row(i).cast<double>();
    const double na = norms[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) continue;
      const Eigen::RowVectorXd b = class_feats.row(j).cast<double>();
      const double nb = norms[static_cast<std::size_t>(j)];
      const double cos = a.dot(b) / (na * nb);
      const double h = static_cast<double>(margin) - (1.0 - cos);
      if (h <= 0.0) continue;
      total += h;
      // d cos / da and d cos / db for this ordered pair.
      grad.row(i) += b / (na * nb) - cos * a / (na * na);
      grad.row(j) += a / (na * nb) - cos * b / (nb * nb);
    }
  }
  return {total, grad.cast<float>()};
}

}  // namespace semiwtc
