#include "semiwtc/rbmlp.hpp"

#include <cmath>
#include <sstream>

#include "semiwtc/util.hpp"

namespace semiwtc {

void RBMLPConfig::validate() const {
  if (input_dim == 0) throw ConfigError("model input_dim must be positive");
  if (num_classes < 2) throw ConfigError("model needs at least two classes");
  if (hidden.empty()) throw ConfigError("model needs hidden layers");
  for (std::size_t h : hidden)
    if (h == 0) throw ConfigError("hidden dims must be positive");
  if (residual_tap < 1 || residual_tap > hidden.size()) throw ConfigError("residual_tap must index a hidden layer");
  if (batchnorm_after < 1 || batchnorm_after > hidden.size())
    throw ConfigError("batchnorm_after must index a hidden layer");
}

Activation hidden_activation(std::size_t layer_index) {
  return layer_index == 0 ? Activation::softplus : Activation::relu;
}

RBMLPModel::RBMLPModel(const RBMLPConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng = Rng::substream(seed, "init");
  std::size_t in = config_.input_dim;
  for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
    layers_.emplace_back("L" + std::to_string(i + 1), in, config_.hidden[i]);
    layers_.back().init_he_uniform(rng);
    in = config_.hidden[i];
  }
  const std::size_t tap_width = config_.hidden[config_.residual_tap - 1];
  shortcut_ = DenseLayer("shortcut", config_.input_dim, tap_width, /*bias=*/false);
  shortcut_.init_uniform(rng, static_cast<float>(1.0 / std::sqrt(static_cast<double>(config_.input_dim))));
  bn_ = BatchNorm("bn", config_.hidden[config_.batchnorm_after - 1]);
  head_sup_ = DenseLayer("head_sup", config_.embedding_dim(), config_.num_classes);
  head_sup_.init_he_uniform(rng);
  head_unsup_ = DenseLayer("head_unsup", config_.embedding_dim(), config_.num_classes);
  head_unsup_.init_he_uniform(rng);
}

ForwardResult RBMLPModel::forward(const Matrix& x, Mode mode) {
  if (mode == Mode::eval) return infer(x);
  if (static_cast<std::size_t>(x.cols()) != config_.input_dim)
    throw DimensionError("model: input has " + std::to_string(x.cols()) + " columns, expected " +
                         std::to_string(config_.input_dim));
  Cache c;
  Matrix a = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix z = layers_[i].forward(a);
    if (config_.residual && i + 1 == config_.residual_tap) z += shortcut_.forward(x);
    Matrix h = activate(z, hidden_activation(i));
    a = (config_.batchnorm && i + 1 == config_.batchnorm_after) ? bn_.forward(h, Mode::train) : h;
    c.pre.push_back(std::move(z));
    c.post.push_back(std::move(h));
  }
  ForwardResult r;
  r.p_sup = activate(head_sup_.forward(a), Activation::softmax);
  r.p_unsup = activate(head_unsup_.forward(a), Activation::softmax);
  r.embedding = std::move(a);
  c.p_sup = r.p_sup;
  c.p_unsup = r.p_unsup;
  cache_ = std::move(c);
  return r;
}

Matrix RBMLPModel::trunk_infer(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != config_.input_dim)
    throw DimensionError("model: input has " + std::to_string(x.cols()) + " columns, expected " +
                         std::to_string(config_.input_dim));
  Matrix a = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix z = layers_[i].infer(a);
    if (config_.residual && i + 1 == config_.residual_tap) z += shortcut_.infer(x);
    a = activate(z, hidden_activation(i));
    if (config_.batchnorm && i + 1 == config_.batchnorm_after) a = bn_.infer(a);
  }
  return a;
}

ForwardResult RBMLPModel::infer(const Matrix& x) const {
  ForwardResult r;
  r.embedding = trunk_infer(x);
  r.p_sup = activate(head_sup_.infer(r.embedding), Activation::softmax);
  r.p_unsup = activate(head_unsup_.infer(r.embedding), Activation::softmax);
  return r;
}

Matrix RBMLPModel::infer_probs(const Matrix& x, Head head) const {
  return activate(this->head(head).infer(trunk_infer(x)), Activation::softmax);
}

Matrix RBMLPModel::embed(const Matrix& x) const { return trunk_infer(x); }

Matrix RBMLPModel::backward(const Matrix& grad_probs, Head head) {
  if (!cache_) throw StateError("model: backward without a train-mode forward");
  const Cache& c = *cache_;
  const Matrix& p = head == Head::sup ? c.p_sup : c.p_unsup;
  if (grad_probs.rows() != p.rows() || grad_probs.cols() != p.cols())
    throw DimensionError("model: gradient shape does not match head output");

  Matrix g = activate_backward(grad_probs, Matrix(), p, Activation::softmax);
  g = this->head(head).backward(g);
  Matrix grad_x;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (config_.batchnorm && i + 1 == config_.batchnorm_after) g = bn_.backward(g);
    g = activate_backward(g, c.pre[i], c.post[i], hidden_activation(i));
    if (config_.residual && i + 1 == config_.residual_tap) grad_x = shortcut_.backward(g);
    g = layers_[i].backward(g);
  }
  if (grad_x.size() != 0) g += grad_x;
  return g;
}

void RBMLPModel::zero_grad() {
  for (Param* p : all_params()) p->zero_grad();
}

std::vector<Param*> RBMLPModel::params(Head head) {
  std::vector<Param*> out;
  for (auto& l : layers_) l.collect(out);
  if (config_.batchnorm) bn_.collect(out);
  if (config_.residual) shortcut_.collect(out);
  this->head(head).collect(out);
  return out;
}

std::vector<Param*> RBMLPModel::all_params() {
  std::vector<Param*> out;
  for (auto& l : layers_) l.collect(out);
  bn_.collect(out);
  shortcut_.collect(out);
  head_sup_.collect(out);
  head_unsup_.collect(out);
  return out;
}

std::vector<const Param*> RBMLPModel::all_params() const {
  std::vector<const Param*> out;
  for (const auto& l : layers_) l.collect(out);
  bn_.collect(out);
  shortcut_.collect(out);
  head_sup_.collect(out);
  head_unsup_.collect(out);
  return out;
}

Checkpoint RBMLPModel::to_checkpoint() const {
  Checkpoint ck;
  std::vector<std::string> dims;
  for (std::size_t h : config_.hidden) dims.push_back(std::to_string(h));
  ck.header["model.input_dim"] = std::to_string(config_.input_dim);
  ck.header["model.hidden"] = join(dims, ",");
  ck.header["model.num_classes"] = std::to_string(config_.num_classes);
  ck.header["model.residual_tap"] = std::to_string(config_.residual_tap);
  ck.header["model.batchnorm_after"] = std::to_string(config_.batchnorm_after);
  ck.header["model.residual"] = config_.residual ? "1" : "0";
  ck.header["model.batchnorm"] = config_.batchnorm ? "1" : "0";
  for (const Param* p : all_params()) ck.blocks.emplace_back(p->name, p->value);
  ck.blocks.emplace_back("bn.running_mean", Matrix(bn_.running_mean()));
  ck.blocks.emplace_back("bn.running_var", Matrix(bn_.running_var()));
  return ck;
}

RBMLPModel RBMLPModel::from_checkpoint(const Checkpoint& ck) {
  auto get = [&](const std::string& key) {
    auto it = ck.header.find(key);
    if (it == ck.header.end()) throw ParseError("checkpoint header missing '" + key + "'");
    return it->second;
  };
  RBMLPConfig cfg;
  cfg.input_dim = std::stoul(get("model.input_dim"));
  cfg.hidden.clear();
  for (const auto& d : split(get("model.hidden"), ',')) cfg.hidden.push_back(std::stoul(d));
  cfg.num_classes = std::stoul(get("model.num_classes"));
  cfg.residual_tap = std::stoul(get("model.residual_tap"));
  cfg.batchnorm_after = std::stoul(get("model.batchnorm_after"));
  cfg.residual = get("model.residual") == "1";
  cfg.batchnorm = get("model.batchnorm") == "1";
  RBMLPModel m(cfg, 0);
  for (Param* p : m.all_params()) {
    const Matrix& v = ck.block(p->name);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
      throw ParseError("checkpoint block '" + p->name + "' has the wrong shape");
    p->value = v;
  }
  m.bn_.running_mean() = ck.block("bn.running_mean").row(0);
  m.bn_.running_var() = ck.block("bn.running_var").row(0);
  return m;
}

double backward_and_step(RBMLPModel& model, Adam& optimizer, const Matrix& x, std::span<const ClassIndex> targets,
                         Head head, const LossConfig& loss, const Matrix* consistency_target) {
  const std::size_t classes = model.config().num_classes;
  ForwardResult fr = model.forward(x, Mode::train);
  const Matrix& p = head == Head::sup ? fr.p_sup : fr.p_unsup;

  LossGrad lg;
  if (loss.wtc) {
    const ClassWeights delta = class_weights_from_batch(targets, classes, loss.weight_clip_lo, loss.weight_clip_hi);
    const float alpha = head == Head::sup ? loss.alpha_sup : loss.alpha_unsup;
    lg = wtc_loss_grad(p, targets, delta, alpha);
  } else {
    lg = cce_grad(p, targets, ClassWeights::ones(classes));
  }
  if (consistency_target != nullptr && loss.cross_head_mse > 0.0f) {
    LossGrad c = prob_mse_grad(p, *consistency_target);
    lg.value += static_cast<double>(loss.cross_head_mse) * c.value;
    lg.grad += loss.cross_head_mse * c.grad;
  }
  if (!std::isfinite(lg.value)) {
    std::ostringstream msg;
    msg << "non-finite loss on a batch of " << x.rows() << " rows (head "
        << (head == Head::sup ? "sup" : "unsup") << ", input finite: " << (x.allFinite() ? "yes" : "no")
        << ", probs finite: " << (p.allFinite() ? "yes" : "no") << ")";
    throw NumericError(msg.str());
  }
  model.zero_grad();
  model.backward(lg.grad, head);
  const auto params = model.params(head);
  optimizer.step(params);
  return lg.value;
}

double batch_loss(const RBMLPModel& model, const Matrix& x, std::span<const ClassIndex> targets, Head head,
                  const LossConfig& loss) {
  const Matrix p = model.infer_probs(x, head);
  const std::size_t classes = model.config().num_classes;
  if (!loss.wtc) return cce(p, targets, ClassWeights::ones(classes));
  const ClassWeights delta = class_weights_from_batch(targets, classes, loss.weight_clip_lo, loss.weight_clip_hi);
  return wtc_loss(p, targets, delta, head == Head::sup ? loss.alpha_sup : loss.alpha_unsup);
}

void RBMLPModel::copy_head(Head from, Head to) {
  if (from == to) return;
  head(to).weight().value = head(from).weight().value;
  head(to).bias().value = head(from).bias().value;
}

}  // namespace semiwtc
