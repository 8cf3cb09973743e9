#include "semiwtc/netcore.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace semiwtc {

bool all_finite(const Matrix& m) { return m.allFinite(); }

// ---------------------------------------------------------------------------
// Dense

DenseLayer::DenseLayer(std::string name, std::size_t in, std::size_t out, bool bias)
    : W_(name + ".W", Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in))),
      b_(name + ".b", Matrix::Zero(1, bias ? static_cast<Eigen::Index>(out) : 0)),
      has_bias_(bias) {
  if (in == 0 || out == 0) throw DimensionError("dense layer '" + name + "' has a zero dimension");
}

void DenseLayer::init_he_uniform(Rng& rng) {
  init_uniform(rng, static_cast<float>(std::sqrt(6.0 / static_cast<double>(in_dim()))));
}

void DenseLayer::init_uniform(Rng& rng, float bound) {
  for (Eigen::Index i = 0; i < W_.value.size(); ++i)
    W_.value.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
  b_.value.setZero();
}

Matrix dense_forward(const Matrix& x, const DenseLayer& layer) {
  if (static_cast<std::size_t>(x.cols()) != layer.in_dim()) {
    throw DimensionError("dense '" + layer.weight().name + "': input has " + std::to_string(x.cols()) +
                         " columns, expected " + std::to_string(layer.in_dim()));
  }
  Matrix y = x * layer.weight().value.transpose();
  if (layer.has_bias()) y.rowwise() += layer.bias().value.row(0);
  return y;
}

DenseGrads dense_backward(const Matrix& grad_out, const Matrix& input, const DenseLayer& layer) {
  if (static_cast<std::size_t>(grad_out.cols()) != layer.out_dim() || grad_out.rows() != input.rows() ||
      static_cast<std::size_t>(input.cols()) != layer.in_dim()) {
    throw DimensionError("dense backward '" + layer.weight().name + "': shape mismatch");
  }
  DenseGrads g;
  g.grad_W = grad_out.transpose() * input;
  g.grad_b = layer.has_bias() ? RowVector(grad_out.colwise().sum()) : RowVector();
  g.grad_in = grad_out * layer.weight().value;
  return g;
}

Matrix DenseLayer::forward(const Matrix& x) {
  Matrix y = dense_forward(x, *this);
  cache_ = x;
  return y;
}

Matrix DenseLayer::infer(const Matrix& x) const { return dense_forward(x, *this); }

Matrix DenseLayer::backward(const Matrix& grad_out) {
  if (!cache_) throw StateError("dense '" + W_.name + "': backward called without a cached forward input");
  DenseGrads g = dense_backward(grad_out, *cache_, *this);
  W_.grad += g.grad_W;
  if (has_bias_) b_.grad.row(0) += g.grad_b;
  return std::move(g.grad_in);
}

void DenseLayer::collect(std::vector<Param*>& out) {
  out.push_back(&W_);
  if (has_bias_) out.push_back(&b_);
}

void DenseLayer::collect(std::vector<const Param*>& out) const {
  out.push_back(&W_);
  if (has_bias_) out.push_back(&b_);
}

// ---------------------------------------------------------------------------
// Activations

float softplus(float x) {
  // max(x, 0) + log1p(exp(-|x|)) avoids overflow for large |x|.
  return std::max(x, 0.0f) + std::log1p(std::exp(-std::fabs(x)));
}

Matrix activate(const Matrix& x, Activation kind) {
  switch (kind) {
    case Activation::identity:
      return x;
    case Activation::relu:
      return x.cwiseMax(0.0f);
    case Activation::softplus:
      return x.unaryExpr([](float v) { return softplus(v); });
    case Activation::softmax: {
      Matrix y(x.rows(), x.cols());
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const float mx = x.row(i).maxCoeff();
        y.row(i) = (x.row(i).array() - mx).exp();
        y.row(i) /= y.row(i).sum();
      }
      // exp underflows to zero past a logit gap of ~100; keep rows strictly positive.
      y = y.cwiseMax(std::numeric_limits<float>::min());
      return y;
    }
  }
  return x;
}

Matrix activate_backward(const Matrix& grad_y, const Matrix& x, const Matrix& y, Activation kind) {
  switch (kind) {
    case Activation::identity:
      return grad_y;
    case Activation::relu:
      return grad_y.array() * (x.array() > 0.0f).cast<float>();
    case Activation::softplus:
      return grad_y.array() * x.unaryExpr([](float v) { return 1.0f / (1.0f + std::exp(-v)); }).array();
    case Activation::softmax: {
      Matrix g(grad_y.rows(), grad_y.cols());
      for (Eigen::Index i = 0; i < grad_y.rows(); ++i) {
        const float dot = grad_y.row(i).dot(y.row(i));
        g.row(i) = y.row(i).array() * (grad_y.row(i).array() - dot);
      }
      return g;
    }
  }
  return grad_y;
}

// ---------------------------------------------------------------------------
// Batch normalization

BatchNorm::BatchNorm(std::string name, std::size_t features, float eps, float momentum)
    : gamma_(name + ".gamma", Matrix::Ones(1, static_cast<Eigen::Index>(features))),
      beta_(name + ".beta", Matrix::Zero(1, static_cast<Eigen::Index>(features))),
      running_mean_(RowVector::Zero(static_cast<Eigen::Index>(features))),
      running_var_(RowVector::Ones(static_cast<Eigen::Index>(features))),
      eps_(eps),
      momentum_(momentum) {
  if (!(eps > 0.0f)) throw ConfigError("batch norm eps must be positive");
}

Matrix BatchNorm::forward(const Matrix& x, Mode mode) {
  if (static_cast<std::size_t>(x.cols()) != features())
    throw DimensionError("batch norm '" + gamma_.name + "': feature count mismatch");
  if (mode == Mode::eval) return infer(x);
  const Eigen::Index n = x.rows();
  if (n < 2) throw DimensionError("batch norm '" + gamma_.name + "': train mode needs a batch of at least 2");

  const RowVector mean = x.colwise().mean();
  Matrix centered = x.rowwise() - mean;
  const RowVector var = centered.array().square().colwise().sum() / static_cast<float>(n);
  inv_std_ = (var.array() + eps_).rsqrt();
  Matrix xhat = centered.array().rowwise() * inv_std_.array();

  const float unbias = static_cast<float>(n) / static_cast<float>(n - 1);
  running_mean_ = (1.0f - momentum_) * running_mean_ + momentum_ * mean;
  running_var_ = (1.0f - momentum_) * running_var_ + momentum_ * (var * unbias);

  Matrix y = (xhat.array().rowwise() * gamma_.value.row(0).array()).rowwise() + beta_.value.row(0).array();
  xhat_ = std::move(xhat);
  return y;
}

Matrix BatchNorm::infer(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != features())
    throw DimensionError("batch norm '" + gamma_.name + "': feature count mismatch");
  const RowVector scale = gamma_.value.row(0).array() * (running_var_.array() + eps_).rsqrt();
  const RowVector shift = beta_.value.row(0).array() - running_mean_.array() * scale.array();
  return (x.array().rowwise() * scale.array()).rowwise() + shift.array();
}

Matrix BatchNorm::backward(const Matrix& grad_out) {
  if (!xhat_) throw StateError("batch norm '" + gamma_.name + "': backward without a train-mode forward");
  const Matrix& xhat = *xhat_;
  const auto n = static_cast<float>(xhat.rows());
  gamma_.grad.row(0) += (grad_out.array() * xhat.array()).colwise().sum().matrix();
  beta_.grad.row(0) += grad_out.colwise().sum();

  Matrix dxhat = grad_out.array().rowwise() * gamma_.value.row(0).array();
  const RowVector sum_d = dxhat.colwise().sum();
  const RowVector sum_dx = (dxhat.array() * xhat.array()).colwise().sum();
  Matrix dx = (dxhat * n).rowwise() - sum_d;
  dx -= Matrix(xhat.array().rowwise() * sum_dx.array());
  dx = dx.array().rowwise() * (inv_std_.array() / n);
  return dx;
}

void BatchNorm::collect(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void BatchNorm::collect(std::vector<const Param*>& out) const {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(std::span<Param* const> params) {
  for (const Param* p : params) {
    if (!p->grad.allFinite()) {
      Eigen::Index bad = 0;
      for (Eigen::Index i = 0; i < p->grad.size(); ++i)
        if (!std::isfinite(p->grad.data()[i])) ++bad;
      throw NumericError("adam: non-finite gradient in '" + p->name + "' (" + std::to_string(bad) + " of " +
                         std::to_string(p->grad.size()) + " entries)");
    }
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols())
      throw DimensionError("adam: gradient shape mismatch for '" + p->name + "'");
  }
  for (Param* p : params) {
    AdamSlot& s = slots_[p->name];
    if (s.m.size() == 0) {
      s.m = Matrix::Zero(p->value.rows(), p->value.cols());
      s.v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    s.t += 1;
    s.m = config_.beta1 * s.m + (1.0f - config_.beta1) * p->grad;
    s.v = config_.beta2 * s.v + (1.0f - config_.beta2) * p->grad.cwiseProduct(p->grad);
    const auto t = static_cast<double>(s.t);
    const auto c1 = static_cast<float>(1.0 - std::pow(static_cast<double>(config_.beta1), t));
    const auto c2 = static_cast<float>(1.0 - std::pow(static_cast<double>(config_.beta2), t));
    const float lr = config_.lr;
    const float eps = config_.eps;
    p->value.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  void get_floats(float* dst, std::size_t count) {
    need(count * sizeof(float));
    std::memcpy(dst, bytes_.data() + pos_, count * sizeof(float));
    pos_ += count * sizeof(float);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Matrix& Checkpoint::block(const std::string& name) const {
  for (const auto& [n, m] : blocks)
    if (n == name) return m;
  throw ParseError("checkpoint has no block '" + name + "'");
}

bool Checkpoint::has_block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.first == name) return true;
  return false;
}

std::string Checkpoint::to_bytes() const {
  std::string out(kMagic, 8);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  for (const auto& [k, v] : header) {
    put_str(out, k);
    put_str(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& [name, m] : blocks) {
    put_str(out, name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(float));
  }
  return out;
}

Checkpoint Checkpoint::from_bytes(std::string_view bytes) {
  if (bytes.size() < 8 || bytes.substr(0, 8) != std::string_view(kMagic, 8))
    throw ParseError("checkpoint: bad magic");
  Reader r(bytes.substr(8));
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint c;
  const auto nh = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < nh; ++i) {
    std::string k = r.get_str();
    c.header[k] = r.get_str();
  }
  const auto nb = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < nb; ++i) {
    std::string name = r.get_str();
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    r.get_floats(m.data(), static_cast<std::size_t>(rows * cols));
    c.blocks.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  const std::string bytes = to_bytes();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("checkpoint write failed for '" + path.string() + "'");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_bytes(ss.str());
}

void add_adam_state(Checkpoint& ckpt, const Adam& adam) {
  const auto& cfg = adam.config();
  ckpt.header["adam.lr"] = std::to_string(cfg.lr);
  for (const auto& [name, slot] : adam.slots()) {
    ckpt.blocks.emplace_back("adam.m/" + name, slot.m);
    ckpt.blocks.emplace_back("adam.v/" + name, slot.v);
    ckpt.header["adam.t/" + name] = std::to_string(slot.t);
  }
}

void restore_adam_state(const Checkpoint& ckpt, Adam& adam) {
  auto& slots = adam.slots();
  slots.clear();
  for (const auto& [name, m] : ckpt.blocks) {
    if (name.rfind("adam.m/", 0) != 0) continue;
    const std::string param = name.substr(7);
    AdamSlot s;
    s.m = m;
    s.v = ckpt.block("adam.v/" + param);
    auto it = ckpt.header.find("adam.t/" + param);
    if (it == ckpt.header.end()) throw ParseError("checkpoint: missing Adam step for '" + param + "'");
    s.t = std::stoll(it->second);
    slots.emplace(param, std::move(s));
  }
}

}  // namespace semiwtc
