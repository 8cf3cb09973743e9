#pragma once

// Residual + batch-norm MLP encoder with two classification heads.
//
//   h1 = softplus(L1 x)
//   h2 = BN(relu(L2 h1))
//   h3 = relu(L3 h2 + S x)        S: bias-free projection D -> 64
//   e  = relu(L4 h3)              32-dim embedding
//   p_sup   = softmax(H_sup e)
//   p_unsup = softmax(H_unsup e)

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "semiwtc/losses.hpp"
#include "semiwtc/netcore.hpp"
#include "semiwtc/types.hpp"

namespace semiwtc {

struct RBMLPConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden{256, 128, 64, 32};
  std::size_t num_classes = 0;
  /// 1-based hidden layer whose pre-activation receives the shortcut.
  std::size_t residual_tap = 3;
  /// 1-based hidden layer whose activation output is batch-normalized.
  std::size_t batchnorm_after = 2;
  bool residual = true;
  bool batchnorm = true;

  void validate() const;
  std::size_t embedding_dim() const { return hidden.back(); }
};

enum class Head { sup, unsup };

struct ForwardResult {
  Matrix p_sup;
  Matrix p_unsup;
  Matrix embedding;
};

class RBMLPModel {
 public:
  RBMLPModel(const RBMLPConfig& config, std::uint64_t seed);

  /// Train mode caches activations for backward() and updates BN running
  /// statistics; eval mode is equivalent to infer().
  ForwardResult forward(const Matrix& x, Mode mode);
  ForwardResult infer(const Matrix& x) const;
  Matrix infer_probs(const Matrix& x, Head head) const;
  Matrix embed(const Matrix& x) const;

  /// Back-propagates dL/dp of one head through the cached train-mode forward.
  /// Accumulates parameter gradients and returns dL/dx.
  Matrix backward(const Matrix& grad_probs, Head head);

  void zero_grad();
  /// Trunk (layers, BN affine, shortcut) plus the selected head.
  std::vector<Param*> params(Head head);
  std::vector<Param*> all_params();
  std::vector<const Param*> all_params() const;

  const RBMLPConfig& config() const { return config_; }
  DenseLayer& layer(std::size_t i) { return layers_.at(i); }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  const DenseLayer& first_layer() const { return layers_.front(); }
  DenseLayer& shortcut() { return shortcut_; }
  const DenseLayer& shortcut() const { return shortcut_; }
  /// Copies weight and bias values of one head into the other; gradients and
  /// optimizer state are untouched.
  void copy_head(Head from, Head to);
  DenseLayer& head(Head h) { return h == Head::sup ? head_sup_ : head_unsup_; }
  const DenseLayer& head(Head h) const { return h == Head::sup ? head_sup_ : head_unsup_; }
  BatchNorm& batchnorm() { return bn_; }
  const BatchNorm& batchnorm() const { return bn_; }

  Checkpoint to_checkpoint() const;
  static RBMLPModel from_checkpoint(const Checkpoint& ckpt);

 private:
  struct Cache {
    std::vector<Matrix> pre;   // pre-activation per hidden layer
    std::vector<Matrix> post;  // activation output per hidden layer (before BN)
    Matrix p_sup;
    Matrix p_unsup;
  };

  Matrix trunk_infer(const Matrix& x) const;

  RBMLPConfig config_;
  std::vector<DenseLayer> layers_;
  DenseLayer shortcut_;
  BatchNorm bn_;
  DenseLayer head_sup_;
  DenseLayer head_unsup_;
  std::optional<Cache> cache_;
};

Activation hidden_activation(std::size_t layer_index);

/// One optimizer step on a batch through the selected head.
///
/// With `loss.wtc` the loss is the weighted cross-entropy with per-batch class
/// weights plus alpha * MSE (alpha_sup or alpha_unsup by head); otherwise it
/// is plain cross-entropy. `consistency_target`, when given and
/// loss.cross_head_mse > 0, adds an MSE pull of this head's probabilities
/// toward those fixed targets. Throws NumericError on a non-finite loss.
double backward_and_step(RBMLPModel& model, Adam& optimizer, const Matrix& x, std::span<const ClassIndex> targets,
                         Head head, const LossConfig& loss, const Matrix* consistency_target = nullptr);

/// Loss of a batch through a head without touching parameters (eval mode).
double batch_loss(const RBMLPModel& model, const Matrix& x, std::span<const ClassIndex> targets, Head head,
                  const LossConfig& loss);

}  // namespace semiwtc
