#pragma once

#include <random>

#include "fedhm/tensor.hpp"

inline fedhm::Tensor bench_tensor(fedhm::Shape shape, std::uint64_t seed) {
  fedhm::Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}
