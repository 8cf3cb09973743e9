#include <doctest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "semiwtc/losses.hpp"
#include "semiwtc/netcore.hpp"

using namespace semiwtc;

namespace {

DenseLayer random_layer(std::size_t in, std::size_t out, std::uint64_t seed, bool bias = true) {
  DenseLayer l("t", in, out, bias);
  l.weight().value = fixtures::random_matrix(out, in, seed, 0.5);
  if (bias) l.bias().value = fixtures::random_matrix(1, out, seed + 1, 0.5);
  return l;
}

}  // namespace

TEST_CASE("dense forward: identity and scalar") {
  DenseLayer id("id", 3, 3);
  id.weight().value = Matrix::Identity(3, 3);
  const Matrix x = fixtures::random_matrix(4, 3, 1);
  CHECK(dense_forward(x, id) == x);

  DenseLayer s("s", 1, 1);
  s.weight().value(0, 0) = 2.0f;
  s.bias().value(0, 0) = 1.0f;
  Matrix x1(1, 1);
  x1(0, 0) = 3.0f;
  CHECK(dense_forward(x1, s)(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("dense backward: identity pass-through and scalar chain rule") {
  DenseLayer id("id", 3, 3);
  id.weight().value = Matrix::Identity(3, 3);
  const Matrix x = fixtures::random_matrix(2, 3, 2);
  const Matrix g = fixtures::random_matrix(2, 3, 3);
  CHECK(dense_backward(g, x, id).grad_in == g);

  DenseLayer s("s", 1, 1);
  s.weight().value(0, 0) = 2.0f;
  Matrix x1(1, 1), g1(1, 1);
  x1(0, 0) = 3.0f;
  g1(0, 0) = 0.5f;
  const DenseGrads dg = dense_backward(g1, x1, s);
  CHECK(dg.grad_W(0, 0) == doctest::Approx(1.5));  // x * g
  CHECK(dg.grad_b(0) == doctest::Approx(0.5));
  CHECK(dg.grad_in(0, 0) == doctest::Approx(1.0));  // w * g
}

TEST_CASE("dense errors") {
  DenseLayer l("l", 3, 2);
  CHECK_THROWS_AS(dense_forward(Matrix::Zero(2, 4), l), DimensionError);
  CHECK_THROWS_AS(l.backward(Matrix::Zero(2, 2)), StateError);
  CHECK_THROWS_AS(DenseLayer("z", 0, 2), DimensionError);
}

TEST_CASE("dense gradients match finite differences on random shapes") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    Rng rng(seed);
    const std::size_t n = 1 + rng.below(8), in = 1 + rng.below(16), out = 1 + rng.below(16);
    CAPTURE(n);
    CAPTURE(in);
    CAPTURE(out);
    DenseLayer l = random_layer(in, out, seed * 10);
    Matrix x = fixtures::random_matrix(n, in, seed * 10 + 2);
    const Matrix g = fixtures::random_matrix(n, out, seed * 10 + 3);
    l.forward(x);
    const Matrix gin = l.backward(g);
    auto loss = [&] { return gradcheck::weighted_sum(g, l.infer(x)); };
    CHECK(gradcheck::check(l.weight().value, l.weight().grad, loss).max_rel < 1e-3);
    CHECK(gradcheck::check(l.bias().value, l.bias().grad, loss).max_rel < 1e-3);
    CHECK(gradcheck::check(x, gin, loss).max_rel < 1e-3);
  }
}

TEST_CASE("activations") {
  CHECK(softplus(0.0f) == doctest::Approx(std::log(2.0)));
  Matrix x(1, 2);
  x << -1.0f, 2.0f;
  const Matrix r = activate(x, Activation::relu);
  CHECK(r(0, 0) == 0.0f);
  CHECK(r(0, 1) == 2.0f);
  CHECK(activate(x, Activation::identity) == x);

  const Matrix u = activate(Matrix::Constant(3, 11, 0.7f), Activation::softmax);
  for (Eigen::Index i = 0; i < u.size(); ++i) CHECK(u.data()[i] == doctest::Approx(1.0 / 11.0));

  // Large logits stay finite and strictly positive.
  Matrix big = fixtures::random_matrix(5, 7, 4, 30.0);
  const Matrix p = activate(big, Activation::softmax);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    CHECK(std::abs(p.row(i).sum() - 1.0f) <= 1e-6f);
    CHECK(p.row(i).minCoeff() > 0.0f);
  }
  CHECK(softplus(100.0f) == doctest::Approx(100.0));
  CHECK(std::isfinite(softplus(-100.0f)));
}

TEST_CASE("activation backward matches finite differences") {
  Matrix x = fixtures::random_matrix(6, 9, 5);
  // Keep relu inputs away from the kink.
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (std::abs(x.data()[i]) < 0.05f) x.data()[i] = 0.3f;
  const Matrix g = fixtures::random_matrix(6, 9, 6);
  for (Activation kind : {Activation::relu, Activation::softplus, Activation::softmax, Activation::identity}) {
    const Matrix y = activate(x, kind);
    const Matrix an = activate_backward(g, x, y, kind);
    Matrix xx = x;
    auto loss = [&] { return gradcheck::weighted_sum(g, activate(xx, kind)); };
    CHECK(gradcheck::check(xx, an, loss).max_rel < 1e-3);
  }
}

TEST_CASE("softmax followed by cross-entropy matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng.below(7), c = 2 + rng.below(9);
    Matrix z = fixtures::random_matrix(n, c, seed + 40);
    std::vector<ClassIndex> y(n);
    for (auto& v : y) v = static_cast<ClassIndex>(rng.below(c));
    const ClassWeights w = class_weights_from_batch(y, c);
    const Matrix p = activate(z, Activation::softmax);
    const Matrix an = activate_backward(wtc_loss_grad(p, y, w, 0.2f).grad, z, p, Activation::softmax);
    auto loss = [&] { return wtc_loss(activate(z, Activation::softmax), y, w, 0.2f); };
    CHECK(gradcheck::check(z, an, loss).max_rel < 1e-3);
  }
}

TEST_CASE("batch norm: constant column, moments, errors") {
  BatchNorm bn("bn", 2);
  Matrix x(4, 2);
  x << 3, 1, 3, 2, 3, 3, 3, 4;
  const Matrix y = bn.forward(x, Mode::train);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(y(i, 0) == 0.0f);

  BatchNorm bn2("bn", 5);
  const Matrix x2 = fixtures::random_matrix(32, 5, 7, 3.0);
  const Matrix y2 = bn2.forward(x2, Mode::train);
  for (Eigen::Index j = 0; j < 5; ++j) {
    const double mean = y2.col(j).cast<double>().mean();
    const double var = (y2.col(j).cast<double>().array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-5);
    // eps shifts the variance by eps / (var + eps).
    const double xv = (x2.col(j).cast<double>().array() - x2.col(j).cast<double>().mean()).square().mean();
    CHECK(std::abs(var - xv / (xv + 1e-5)) < 1e-5);
  }

  CHECK_THROWS_AS(bn2.forward(Matrix::Zero(1, 5), Mode::train), DimensionError);
  CHECK_THROWS_AS(bn2.forward(Matrix::Zero(4, 3), Mode::train), DimensionError);
  BatchNorm fresh("bn", 5);
  CHECK_THROWS_AS(fresh.backward(Matrix::Zero(4, 5)), StateError);
}

TEST_CASE("batch norm running statistics") {
  BatchNorm bn("bn", 1);
  Matrix x(4, 1);
  x << 1, 2, 3, 6;  // mean 3, biased var 3.5, unbiased 14/3
  bn.forward(x, Mode::train);
  CHECK(bn.running_mean()(0) == doctest::Approx(0.9 * 0.0 + 0.1 * 3.0));
  CHECK(bn.running_var()(0) == doctest::Approx(0.9 * 1.0 + 0.1 * 14.0 / 3.0));

  const RowVector rm = bn.running_mean(), rv = bn.running_var();
  const Matrix e = bn.forward(x, Mode::eval);
  CHECK(bn.running_mean() == rm);
  CHECK(bn.running_var() == rv);
  CHECK(e(0, 0) == doctest::Approx((1.0 - rm(0)) / std::sqrt(rv(0) + 1e-5)));
}

TEST_CASE("batch norm gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng.below(7), f = 1 + rng.below(16);
    BatchNorm bn("bn", f);
    bn.gamma().value = fixtures::random_matrix(1, f, seed + 1);
    bn.beta().value = fixtures::random_matrix(1, f, seed + 2);
    Matrix x = fixtures::random_matrix(n, f, seed + 3, 2.0);
    const Matrix g = fixtures::random_matrix(n, f, seed + 4);
    bn.forward(x, Mode::train);
    const Matrix gx = bn.backward(g);
    BatchNorm probe = bn;
    auto loss = [&] { return gradcheck::weighted_sum(g, probe.forward(x, Mode::train)); };
    CHECK(gradcheck::check(x, gx, loss).max_rel < 1e-3);
    CHECK(gradcheck::check(probe.gamma().value, bn.gamma().grad, loss).max_rel < 1e-3);
    CHECK(gradcheck::check(probe.beta().value, bn.beta().grad, loss).max_rel < 1e-3);
  }
}

TEST_CASE("adam: fixed point, first step and a scalar quadratic") {
  Param p("w", Matrix::Constant(2, 3, 1.5f));
  Adam adam;
  std::vector<Param*> ps{&p};
  adam.step(ps);
  CHECK(p.value == Matrix::Constant(2, 3, 1.5f));

  Param q("q", Matrix::Zero(1, 4));
  q.grad << 0.3f, -7.0f, 100.0f, -1e-3f;
  Adam a2;
  std::vector<Param*> qs{&q};
  a2.step(qs);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(q.value(0, i)) == doctest::Approx(1e-3).epsilon(1e-3));
  CHECK(q.value(0, 0) < 0.0f);
  CHECK(q.value(0, 1) > 0.0f);

  // f(w) = (w - 3)^2 from 0; compare with a double-precision recurrence.
  Param w("w", Matrix::Zero(1, 1));
  Adam a3(AdamConfig{0.01f, 0.9f, 0.999f, 1e-8f});
  std::vector<Param*> ws{&w};
  double rw = 0.0, m = 0.0, v = 0.0;
  std::size_t reached = 0;
  for (std::size_t t = 1; t <= 2000; ++t) {
    w.grad(0, 0) = 2.0f * (w.value(0, 0) - 3.0f);
    a3.step(ws);
    const double g = 2.0 * (rw - 3.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    rw -= 0.01 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
    if (reached == 0 && std::abs(w.value(0, 0) - 3.0f) < 0.01f) reached = t;
  }
  CHECK(reached > 0);
  CHECK(std::abs(w.value(0, 0) - 3.0f) < 0.01f);
  CHECK(std::abs(rw - 3.0) < 0.01);
  CHECK(w.value(0, 0) == doctest::Approx(rw).epsilon(1e-3));
}

TEST_CASE("adam rejects non-finite gradients before any update") {
  Param a("a", Matrix::Ones(1, 2)), b("b", Matrix::Ones(1, 2));
  a.grad.setConstant(1.0f);
  b.grad(0, 1) = std::numeric_limits<float>::quiet_NaN();
  Adam adam;
  std::vector<Param*> ps{&a, &b};
  CHECK_THROWS_AS(adam.step(ps), NumericError);
  CHECK(a.value == Matrix::Ones(1, 2));
  CHECK(adam.slots().empty());
}

TEST_CASE("adam step counts are per parameter") {
  Param a("a", Matrix::Zero(1, 1)), b("b", Matrix::Zero(1, 1));
  a.grad(0, 0) = 1.0f;
  b.grad(0, 0) = 1.0f;
  Adam adam;
  std::vector<Param*> both{&a, &b}, only_a{&a};
  adam.step(only_a);
  adam.step(both);
  CHECK(adam.slots().at("a").t == 2);
  CHECK(adam.slots().at("b").t == 1);
  CHECK(b.value(0, 0) == doctest::Approx(-1e-3).epsilon(1e-3));
}

TEST_CASE("checkpoint round trip and corruption") {
  Checkpoint c;
  c.header["k"] = "v";
  c.blocks.emplace_back("m", fixtures::random_matrix(3, 4, 9));
  c.blocks.emplace_back("e", Matrix(0, 5));
  const std::string bytes = c.to_bytes();
  const Checkpoint d = Checkpoint::from_bytes(bytes);
  CHECK(d.header == c.header);
  CHECK(d.block("m") == c.block("m"));
  CHECK(d.block("e").cols() == 5);
  CHECK_FALSE(d.has_block("x"));
  CHECK_THROWS_AS(d.block("x"), ParseError);

  CHECK_THROWS_AS(Checkpoint::from_bytes("NOTACKPT"), ParseError);
  CHECK_THROWS_AS(Checkpoint::from_bytes(bytes.substr(0, bytes.size() - 3)), ParseError);
  CHECK_THROWS_AS(Checkpoint::from_bytes(bytes + "x"), ParseError);
  std::string wrong_version = bytes;
  wrong_version[8] = 9;
  CHECK_THROWS_AS(Checkpoint::from_bytes(wrong_version), ParseError);
  CHECK_THROWS_AS(Checkpoint::load("/nonexistent/ckpt"), IoError);
}

TEST_CASE("adam state survives a checkpoint") {
  Param p("p", Matrix::Zero(2, 2));
  p.grad.setConstant(0.5f);
  Adam adam;
  std::vector<Param*> ps{&p};
  adam.step(ps);
  adam.step(ps);
  Checkpoint c;
  add_adam_state(c, adam);
  Adam restored;
  restore_adam_state(Checkpoint::from_bytes(c.to_bytes()), restored);
  CHECK(restored.slots().at("p").t == 2);
  CHECK(restored.slots().at("p").m == adam.slots().at("p").m);
  CHECK(restored.slots().at("p").v == adam.slots().at("p").v);
}
