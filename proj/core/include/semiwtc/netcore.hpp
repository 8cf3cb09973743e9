#pragma once

// Dense-network building blocks: affine layers, activations, batch
// normalization, Adam, and a flat binary checkpoint container.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "semiwtc/rng.hpp"
#include "semiwtc/types.hpp"

namespace semiwtc {

enum class Mode { train, eval };

/// A trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

struct DenseGrads {
  Matrix grad_in;
  Matrix grad_W;
  RowVector grad_b;
};

/// y = x W^T + b. W is out x in; the optional bias is a 1 x out row.
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(std::string name, std::size_t in, std::size_t out, bool bias = true);

  /// He-style uniform: U(-sqrt(6/in), sqrt(6/in)); bias zero.
  void init_he_uniform(Rng& rng);
  void init_uniform(Rng& rng, float bound);

  /// Training forward; caches the input for backward().
  Matrix forward(const Matrix& x);
  /// Stateless forward.
  Matrix infer(const Matrix& x) const;
  /// Accumulates parameter gradients and returns the input gradient.
  Matrix backward(const Matrix& grad_out);
  void clear_cache() { cache_.reset(); }

  std::size_t in_dim() const { return static_cast<std::size_t>(W_.value.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(W_.value.rows()); }
  bool has_bias() const { return has_bias_; }

  Param& weight() { return W_; }
  const Param& weight() const { return W_; }
  Param& bias() { return b_; }
  const Param& bias() const { return b_; }

  void collect(std::vector<Param*>& out);
  void collect(std::vector<const Param*>& out) const;

 private:
  Param W_;
  Param b_;
  bool has_bias_ = true;
  std::optional<Matrix> cache_;
};

Matrix dense_forward(const Matrix& x, const DenseLayer& layer);
/// Reverse-mode gradients of the affine map at `input`.
DenseGrads dense_backward(const Matrix& grad_out, const Matrix& input, const DenseLayer& layer);

enum class Activation { relu, softplus, softmax, identity };

Matrix activate(const Matrix& x, Activation kind);
/// Gradient w.r.t. the pre-activation `x`, given the forward output `y`.
Matrix activate_backward(const Matrix& grad_y, const Matrix& x, const Matrix& y, Activation kind);

float softplus(float x);

/// Per-feature batch normalization with learned affine parameters.
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(std::string name, std::size_t features, float eps = 1e-5f, float momentum = 0.1f);

  /// Train mode normalizes with batch statistics (biased variance) and
  /// updates the running estimates (unbiased variance); eval mode uses the
  /// running estimates and leaves them untouched.
  Matrix forward(const Matrix& x, Mode mode);
  Matrix infer(const Matrix& x) const;
  Matrix backward(const Matrix& grad_out);

  std::size_t features() const { return static_cast<std::size_t>(gamma_.value.cols()); }
  float eps() const { return eps_; }
  float momentum() const { return momentum_; }

  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }
  const Param& gamma() const { return gamma_; }
  const Param& beta() const { return beta_; }
  RowVector& running_mean() { return running_mean_; }
  RowVector& running_var() { return running_var_; }
  const RowVector& running_mean() const { return running_mean_; }
  const RowVector& running_var() const { return running_var_; }

  void collect(std::vector<Param*>& out);
  void collect(std::vector<const Param*>& out) const;

 private:
  Param gamma_;
  Param beta_;
  RowVector running_mean_;
  RowVector running_var_;
  float eps_ = 1e-5f;
  float momentum_ = 0.1f;
  // Train-mode cache.
  std::optional<Matrix> xhat_;
  RowVector inv_std_;
};

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Moment accumulators for one parameter. Each parameter keeps its own step
/// count so that parameters skipped in a step keep correct bias correction.
struct AdamSlot {
  Matrix m;
  Matrix v;
  std::int64_t t = 0;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Bias-corrected Adam update of every parameter from its `grad`.
  /// Throws NumericError (before touching any parameter) on a non-finite gradient.
  void step(std::span<Param* const> params);

  const AdamConfig& config() const { return config_; }
  AdamConfig& config() { return config_; }
  const std::map<std::string, AdamSlot>& slots() const { return slots_; }
  std::map<std::string, AdamSlot>& slots() { return slots_; }

 private:
  AdamConfig config_;
  std::map<std::string, AdamSlot> slots_;
};

/// Versioned flat binary container for model parameters.
///
/// Layout (little-endian): magic "SWTCCKPT", u32 version, u32 header count,
/// header entries (u32 len + key, u32 len + value), u32 block count, blocks
/// (u32 len + name, u64 rows, u64 cols, rows*cols float32 row-major).
struct Checkpoint {
  static constexpr char kMagic[9] = "SWTCCKPT";
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> header;
  std::vector<std::pair<std::string, Matrix>> blocks;

  const Matrix& block(const std::string& name) const;
  bool has_block(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
  std::string to_bytes() const;
  static Checkpoint from_bytes(std::string_view bytes);
};

void add_adam_state(Checkpoint& ckpt, const Adam& adam);
void restore_adam_state(const Checkpoint& ckpt, Adam& adam);

bool all_finite(const Matrix& m);

}  // namespace semiwtc
