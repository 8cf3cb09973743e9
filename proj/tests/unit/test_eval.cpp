#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "semiwtc/eval.hpp"
#include "semiwtc/rng.hpp"

using namespace semiwtc;

namespace {

ConfusionMatrix hand() {
  const std::vector<ClassIndex> preds{0, 1, 1}, labels{0, 0, 1};
  return confusion(preds, labels, 2);
}

}  // namespace

TEST_CASE("confusion counts") {
  const ConfusionMatrix cm = hand();
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(1, 0) == 0);
  CHECK(cm.at(1, 1) == 1);
  CHECK(cm.total() == 3);

  const std::vector<ClassIndex> y{0, 1, 2, 2};
  const ConfusionMatrix diag = confusion(y, y, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) CHECK(diag.at(i, j) == 0);

  const ConfusionMatrix empty = confusion(std::vector<ClassIndex>{}, std::vector<ClassIndex>{}, 4);
  CHECK(empty.total() == 0);
  CHECK_THROWS_AS(confusion(std::vector<ClassIndex>{3}, std::vector<ClassIndex>{0}, 3), DimensionError);
  CHECK_THROWS_AS(confusion(std::vector<ClassIndex>{0, 1}, std::vector<ClassIndex>{0}, 3), DimensionError);
}

TEST_CASE("metrics on the hand matrix") {
  const ConfusionMatrix cm = hand();
  CHECK(accuracy(cm) == doctest::Approx(2.0 / 3.0));
  CHECK(macro_f1(cm) == doctest::Approx(2.0 / 3.0));
  CHECK(tpr(cm) == doctest::Approx(0.75));
  CHECK(fpr(cm) == doctest::Approx(0.25));
  CHECK(precision(cm, 0) == doctest::Approx(1.0));
  CHECK(precision(cm, 1) == doctest::Approx(0.5));
  CHECK(recall(cm, 0) == doctest::Approx(0.5));
}

TEST_CASE("metric boundaries") {
  const std::vector<ClassIndex> y{0, 1, 2, 1};
  const ConfusionMatrix diag = confusion(y, y, 3);
  CHECK(accuracy(diag) == 1.0);
  CHECK(macro_f1(diag) == 1.0);
  CHECK(tpr(diag) == 1.0);
  CHECK(fpr(diag) == 0.0);

  const std::vector<ClassIndex> p{1, 0, 0, 0};
  const ConfusionMatrix off = confusion(p, y, 3);
  CHECK(accuracy(off) == 0.0);

  CHECK_THROWS_AS(accuracy(ConfusionMatrix(2)), DomainError);

  // Class 3 never occurs: excluded, so the mean is unchanged.
  const ConfusionMatrix wide = confusion(y, y, 4);
  CHECK(macro_f1(wide) == 1.0);
  CHECK(tpr(wide) == 1.0);
  CHECK(std::isnan(precision(wide, 3)));
  CHECK(std::isnan(recall(wide, 3)));

  // Single-class data: fpr comes from the other class's negatives.
  const std::vector<ClassIndex> one{0, 0, 0}, pred{0, 1, 0};
  const ConfusionMatrix single = confusion(pred, one, 2);
  CHECK(fpr(single) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("binary matrices reduce to the two-class formulas") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ClassIndex> p(50), y(50);
    for (std::size_t i = 0; i < 50; ++i) {
      p[i] = static_cast<ClassIndex>(rng.below(2));
      y[i] = static_cast<ClassIndex>(rng.below(2));
    }
    const ConfusionMatrix cm = confusion(p, y, 2);
    const double tp = static_cast<double>(cm.at(1, 1)), tn = static_cast<double>(cm.at(0, 0));
    const double fp = static_cast<double>(cm.at(0, 1)), fn = static_cast<double>(cm.at(1, 0));
    CHECK(accuracy(cm) == doctest::Approx((tp + tn) / (tp + tn + fp + fn)));
    CHECK(cm.tn(1) == cm.at(0, 0));
  }
}

TEST_CASE("metrics are ranges and invariant to class relabelling") {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t c = 2 + rng.below(6);
    std::vector<ClassIndex> p(40), y(40);
    for (std::size_t i = 0; i < 40; ++i) {
      y[i] = static_cast<ClassIndex>(rng.below(c));
      p[i] = rng.uniform() < 0.6 ? y[i] : static_cast<ClassIndex>(rng.below(c));
    }
    std::vector<ClassIndex> perm(c);
    for (std::size_t k = 0; k < c; ++k) perm[k] = static_cast<ClassIndex>(k);
    rng.shuffle(perm);
    std::vector<ClassIndex> pp(40), yy(40);
    for (std::size_t i = 0; i < 40; ++i) {
      pp[i] = perm[static_cast<std::size_t>(p[i])];
      yy[i] = perm[static_cast<std::size_t>(y[i])];
    }
    const Metrics a = summarize(confusion(p, y, c));
    const Metrics b = summarize(confusion(pp, yy, c));
    for (double v : {a.accuracy, a.macro_f1, a.tpr, a.fpr}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(a.accuracy == doctest::Approx(b.accuracy));
    CHECK(a.macro_f1 == doctest::Approx(b.macro_f1));
    CHECK(a.tpr == doctest::Approx(b.tpr));
    CHECK(a.fpr == doctest::Approx(b.fpr));
  }
}

TEST_CASE("argmax ties resolve to the lowest index") {
  Matrix p(2, 4);
  p << 0.25f, 0.25f, 0.25f, 0.25f, 0.1f, 0.4f, 0.1f, 0.4f;
  const auto a = argmax_rows(p);
  CHECK(a[0] == 0);
  CHECK(a[1] == 1);
  const auto m = max_rows(p);
  CHECK(m[1] == doctest::Approx(0.4));
}
