#include <benchmark/benchmark.h>

#include <vector>

#include "semiwtc/aar.hpp"
#include "semiwtc/losses.hpp"
#include "semiwtc/rbmlp.hpp"
#include "semiwtc/rng.hpp"

using namespace semiwtc;

namespace {

Matrix gaussian(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(rng.normal());
  return x;
}

RBMLPConfig nslkdd_shape() {
  RBMLPConfig cfg;
  cfg.input_dim = 122;
  cfg.num_classes = 11;
  return cfg;
}

std::vector<ClassIndex> labels(std::size_t n) {
  std::vector<ClassIndex> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<ClassIndex>(i % 11);
  return y;
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RBMLPModel m(nslkdd_shape(), 1);
  const Matrix x = gaussian(n, 122, 2);
  for (auto _ : state) benchmark::DoNotOptimize(m.infer(x).p_sup.data());
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_Forward)->Arg(256)->Arg(2000);

static void BM_TrainStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RBMLPModel m(nslkdd_shape(), 1);
  Adam adam;
  const Matrix x = gaussian(n, 122, 3);
  const std::vector<ClassIndex> y = labels(n);
  for (auto _ : state) backward_and_step(m, adam, x, y, Head::sup, LossConfig{});
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_TrainStep)->Arg(256)->Arg(2000);

static void BM_MeanShift(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Matrix x = gaussian(n, 32, 4);
  x.topRows(static_cast<Eigen::Index>(n / 2)).array() += 4.0f;
  MeanShiftConfig cfg;
  cfg.bandwidth = estimate_bandwidth(x, 5);
  for (auto _ : state) benchmark::DoNotOptimize(mean_shift(x, cfg).centers.data());
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_MeanShift)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
