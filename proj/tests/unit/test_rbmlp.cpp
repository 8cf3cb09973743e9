#include <doctest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "model_kinks.hpp"
#include "semiwtc/experiment.hpp"
#include "semiwtc/rbmlp.hpp"

using namespace semiwtc;

namespace {

RBMLPConfig toy_config(std::size_t d = 9, std::size_t c = 3) {
  RBMLPConfig cfg;
  cfg.input_dim = d;
  cfg.num_classes = c;
  cfg.hidden = {12, 10, 8, 6};
  return cfg;
}

double head_loss(RBMLPModel& m, const Matrix& x, const std::vector<ClassIndex>& y, const ClassWeights& d, Head h) {
  const ForwardResult f = m.forward(x, Mode::train);
  return wtc_loss(h == Head::sup ? f.p_sup : f.p_unsup, y, d, 0.2f);
}

// Reference forward written out layer by layer, without the shortcut.
Matrix reference_plain(const RBMLPModel& m, const Matrix& x) {
  Matrix a = x;
  for (std::size_t i = 0; i < 4; ++i) {
    a = activate(dense_forward(a, m.layer(i)), hidden_activation(i));
    if (i == 1) a = m.batchnorm().infer(a);
  }
  return activate(dense_forward(a, m.head(Head::sup)), Activation::softmax);
}

}  // namespace

TEST_CASE("forward shapes and simplex rows") {
  RBMLPModel m(toy_config(), 1);
  const Matrix x = fixtures::random_matrix(5, 9, 2);
  const ForwardResult f = m.forward(x, Mode::train);
  CHECK(f.p_sup.rows() == 5);
  CHECK(f.p_sup.cols() == 3);
  CHECK(f.embedding.cols() == 6);
  for (const Matrix* p : {&f.p_sup, &f.p_unsup})
    for (Eigen::Index i = 0; i < p->rows(); ++i) CHECK(std::abs(p->row(i).sum() - 1.0f) <= 1e-6f);
  CHECK(m.head(Head::sup).weight().value.rows() == m.head(Head::unsup).weight().value.rows());
  CHECK(m.shortcut().out_dim() == m.layer(2).out_dim());
  CHECK_THROWS_AS(m.forward(fixtures::random_matrix(5, 8, 2), Mode::train), DimensionError);
  RBMLPModel fresh(toy_config(), 1);
  CHECK_THROWS_AS(fresh.backward(Matrix::Zero(5, 3), Head::sup), StateError);
}

TEST_CASE("NSL-KDD pipeline gives D = 122 and C = 11") {
  ExperimentConfig cfg = ExperimentConfig::load(std::string(SEMIWTC_SOURCE_DIR) + "/configs/nslkdd.cfg");
  const PreparedData data = prepare_data(cfg);
  const PreparedSplit p = split_dataset(data.table, data.schema, cfg.split, 1);
  CHECK(p.split.input_dim() == 122);
  CHECK(p.encoder.one_hot_width() == 84);
  CHECK(p.encoder.numeric_width() == 38);
  CHECK(p.split.num_classes() == 11);
  RBMLPModel m(model_config(cfg, p.split.input_dim(), p.split.num_classes()), 1);
  const ForwardResult f = m.infer(p.split.test.x.data.topRows(7));
  CHECK(f.p_sup.cols() == 11);
  CHECK(f.p_unsup.cols() == 11);
  CHECK(f.embedding.cols() == 32);
}

TEST_CASE("identical heads give identical outputs") {
  RBMLPModel m(toy_config(), 3);
  m.head(Head::unsup).weight().value = m.head(Head::sup).weight().value;
  m.head(Head::unsup).bias().value = m.head(Head::sup).bias().value;
  const ForwardResult f = m.infer(fixtures::random_matrix(4, 9, 4));
  CHECK(f.p_sup == f.p_unsup);
}

TEST_CASE("full-model gradients match finite differences") {
  for (Head h : {Head::sup, Head::unsup}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      RBMLPModel m(toy_config(), seed);
      // Move BN off its identity so gamma and beta matter.
      m.batchnorm().gamma().value = fixtures::random_matrix(1, 10, seed + 5, 0.5).array() + 1.0f;
      m.batchnorm().beta().value = fixtures::random_matrix(1, 10, seed + 6, 0.5);
      Matrix x = fixtures::random_matrix(6, 9, seed + 7);
      const std::vector<ClassIndex> y{0, 1, 2, 0, 1, 1};
      const ClassWeights d = class_weights_from_batch(y, 3);

      m.zero_grad();
      const ForwardResult f = m.forward(x, Mode::train);
      const Matrix gx = m.backward(wtc_loss_grad(h == Head::sup ? f.p_sup : f.p_unsup, y, d, 0.2f).grad, h);

      RBMLPModel probe = m;
      auto loss = [&] { return head_loss(probe, x, y, d, h); };
      auto kinks = [&] { return gradcheck::relu_signs(probe, x); };
      std::vector<Param*> analytic = m.params(h);
      std::vector<Param*> values = probe.params(h);
      REQUIRE(analytic.size() == values.size());
      for (std::size_t i = 0; i < values.size(); ++i) {
        CAPTURE(values[i]->name);
        const auto r = gradcheck::check(values[i]->value, analytic[i]->grad, loss, gradcheck::kStep, kinks);
        CHECK(r.max_rel < 1e-3);
        CHECK(r.skipped * 20 <= r.checked + r.skipped);
      }
      const auto rx = gradcheck::check(x, gx, loss, gradcheck::kStep, kinks);
      CHECK(rx.max_rel < 1e-3);
      CHECK(rx.skipped * 20 <= rx.checked + rx.skipped);
      // The inactive head receives nothing.
      const Head other = h == Head::sup ? Head::unsup : Head::sup;
      CHECK(m.head(other).weight().grad.isZero());
    }
  }
}

TEST_CASE("the shortcut receives gradient") {
  RBMLPModel m(toy_config(), 4);
  const Matrix x = fixtures::random_matrix(6, 9, 5);
  const ForwardResult f = m.forward(x, Mode::train);
  m.zero_grad();
  m.backward(fixtures::random_matrix(6, 3, 6), Head::sup);
  CHECK(m.shortcut().weight().grad.norm() > 0.0f);
}

TEST_CASE("residual off equals a zero shortcut and a plain reference MLP") {
  RBMLPConfig on = toy_config();
  RBMLPConfig off = on;
  off.residual = false;
  RBMLPModel a(on, 7);
  RBMLPModel b(off, 7);
  a.shortcut().weight().value.setZero();
  const Matrix x = fixtures::random_matrix(5, 9, 8);
  CHECK(a.infer(x).p_sup == b.infer(x).p_sup);
  CHECK(b.infer(x).p_sup == reference_plain(b, x));
}

TEST_CASE("eval forward leaves running statistics alone") {
  RBMLPModel m(toy_config(), 9);
  const Matrix x = fixtures::random_matrix(8, 9, 10);
  m.forward(x, Mode::train);
  const RowVector rm = m.batchnorm().running_mean(), rv = m.batchnorm().running_var();
  const ForwardResult e1 = m.forward(x, Mode::eval);
  const ForwardResult e2 = m.forward(x, Mode::eval);
  CHECK(m.batchnorm().running_mean() == rm);
  CHECK(m.batchnorm().running_var() == rv);
  CHECK(e1.p_sup == e2.p_sup);
}

TEST_CASE("training on a separable toy drives the loss down") {
  RBMLPConfig cfg = toy_config(4, 2);
  RBMLPModel m(cfg, 11);
  Rng rng(12);
  Matrix x(64, 4);
  std::vector<ClassIndex> y(64);
  for (Eigen::Index i = 0; i < 64; ++i) {
    y[static_cast<std::size_t>(i)] = static_cast<ClassIndex>(i % 2);
    const float shift = i % 2 ? 2.0f : -2.0f;
    for (Eigen::Index j = 0; j < 4; ++j) x(i, j) = shift + 0.3f * static_cast<float>(rng.normal());
  }
  Adam adam;
  LossConfig loss;
  loss.wtc = false;
  for (int step = 0; step < 200; ++step) backward_and_step(m, adam, x, y, Head::sup, loss);
  CHECK(batch_loss(m, x, y, Head::sup, loss) < 0.1);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  RBMLPModel m(toy_config(), 13);
  const RBMLPModel before = m;
  Adam adam(AdamConfig{0.0f, 0.9f, 0.999f, 1e-8f});
  const std::vector<ClassIndex> y{0, 1, 2, 0};
  backward_and_step(m, adam, fixtures::random_matrix(4, 9, 14), y, Head::sup, LossConfig{});
  auto p0 = before.all_params();
  auto p1 = std::as_const(m).all_params();
  for (std::size_t i = 0; i < p0.size(); ++i) CHECK(p0[i]->value == p1[i]->value);
}

TEST_CASE("non-finite input aborts the step") {
  RBMLPModel m(toy_config(), 15);
  Matrix x = fixtures::random_matrix(4, 9, 16);
  x(1, 3) = std::numeric_limits<float>::quiet_NaN();
  Adam adam;
  const std::vector<ClassIndex> y{0, 1, 2, 0};
  CHECK_THROWS_AS(backward_and_step(m, adam, x, y, Head::sup, LossConfig{}), NumericError);
}

TEST_CASE("checkpoint round trip reproduces inference") {
  RBMLPConfig cfg = toy_config();
  cfg.residual_tap = 3;
  RBMLPModel m(cfg, 17);
  const Matrix x = fixtures::random_matrix(6, 9, 18);
  m.forward(x, Mode::train);  // move the running statistics
  const RBMLPModel back = RBMLPModel::from_checkpoint(Checkpoint::from_bytes(m.to_checkpoint().to_bytes()));
  CHECK(back.infer(x).p_sup == m.infer(x).p_sup);
  CHECK(back.infer(x).p_unsup == m.infer(x).p_unsup);
  CHECK(back.config().hidden == cfg.hidden);

  RBMLPConfig bad = cfg;
  bad.residual_tap = 9;
  CHECK_THROWS_AS(RBMLPModel(bad, 1), ConfigError);
  bad = cfg;
  bad.num_classes = 1;
  CHECK_THROWS_AS(RBMLPModel(bad, 1), ConfigError);
}

TEST_CASE("initialization is seeded") {
  const Matrix x = fixtures::random_matrix(3, 9, 19);
  CHECK(RBMLPModel(toy_config(), 5).infer(x).p_sup == RBMLPModel(toy_config(), 5).infer(x).p_sup);
  CHECK(RBMLPModel(toy_config(), 5).infer(x).p_sup != RBMLPModel(toy_config(), 6).infer(x).p_sup);
}
