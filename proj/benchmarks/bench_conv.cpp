#include <benchmark/benchmark.h>

#include "bench_util.hpp"
#include "fedhm/factorize.hpp"
#include "fedhm/layers.hpp"

using fedhm::nn::ConvGeometry;

static void BM_ConvForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const fedhm::Tensor x = bench_tensor({8, c, 16, 16}, 1);
  const fedhm::Tensor W = bench_tensor({c, c, 3, 3}, 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(fedhm::nn::conv2d_forward(x, W, ConvGeometry::square(1, 1)));
}
BENCHMARK(BM_ConvForward)->Arg(8)->Arg(16)->Arg(32);

static void BM_FactorizedConvForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const fedhm::Tensor x = bench_tensor({8, c, 16, 16}, 1);
  const fedhm::Tensor W = bench_tensor({c, c, 3, 3}, 2);
  const auto pair = fedhm::spectral_factorize(W, fedhm::layer_rank(W.shape(), 0.25));
  for (auto _ : state)
    benchmark::DoNotOptimize(fedhm::nn::factorized_conv_forward(x, pair.U, pair.V, 1, 1));
}
BENCHMARK(BM_FactorizedConvForward)->Arg(8)->Arg(16)->Arg(32);

static void BM_ConvBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const fedhm::Tensor x = bench_tensor({8, c, 16, 16}, 1);
  const fedhm::Tensor W = bench_tensor({c, c, 3, 3}, 2);
  const fedhm::Tensor g = bench_tensor({8, c, 16, 16}, 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(fedhm::nn::conv2d_backward(x, W, ConvGeometry::square(1, 1), g));
}
BENCHMARK(BM_ConvBackward)->Arg(8)->Arg(16)->Arg(32);

BENCHMARK_MAIN();
