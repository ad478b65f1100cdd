#include <benchmark/benchmark.h>

#include "bench_util.hpp"
#include "fedhm/factorize.hpp"
#include "fedhm/svd.hpp"

static void BM_Svd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const fedhm::Tensor M = bench_tensor({n, n}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(fedhm::svd(M));
}
BENCHMARK(BM_Svd)->Arg(16)->Arg(64)->Arg(192);

// Spectral split of a 3x3 conv weight with m = n = channels, at quarter rank.
static void BM_SpectralFactorizeConv(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const fedhm::Tensor W = bench_tensor({c, c, 3, 3}, 11);
  const std::size_t r = fedhm::layer_rank(W.shape(), 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(fedhm::spectral_factorize(W, r));
}
BENCHMARK(BM_SpectralFactorizeConv)->Arg(16)->Arg(32)->Arg(64);

BENCHMARK_MAIN();
