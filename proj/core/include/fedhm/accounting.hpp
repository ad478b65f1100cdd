#pragma once

#include <cstddef>
#include <cstdint>

#include "fedhm/model.hpp"
#include "fedhm/modelspec.hpp"

namespace fedhm {

// Closed forms for single layers (no bias).
constexpr std::uint64_t dense_params(std::uint64_t m, std::uint64_t n) { return m * n; }
constexpr std::uint64_t factorized_dense_params(std::uint64_t m, std::uint64_t n, std::uint64_t r) {
  return r * (m + n);
}
constexpr std::uint64_t conv_params(std::uint64_t m, std::uint64_t n, std::uint64_t k) {
  return m * n * k * k;
}
constexpr std::uint64_t factorized_conv_params(std::uint64_t m, std::uint64_t n, std::uint64_t k,
                                               std::uint64_t r) {
  return r * k * (m + n);
}
constexpr std::uint64_t conv_macs(std::uint64_t m, std::uint64_t n, std::uint64_t k,
                                  std::uint64_t h, std::uint64_t w) {
  return m * n * k * k * h * w;
}
constexpr std::uint64_t factorized_conv_macs(std::uint64_t m, std::uint64_t n, std::uint64_t k,
                                             std::uint64_t r, std::uint64_t h, std::uint64_t w) {
  return r * k * h * w * (m + n);
}

/// Trainable parameters of one layer (BatchNorm: 2 per channel).
std::uint64_t count_params(const LayerSpec& layer);
std::uint64_t count_params(const ModelSpec& spec);
std::uint64_t count_params(const Model& model);

/// Non-trainable buffers (BatchNorm running statistics, 2 per channel).
std::uint64_t count_buffers(const ModelSpec& spec);

/// Multiply-accumulates of one layer given its per-sample output shape.
/// Only conv and dense kinds contribute.
std::uint64_t layer_macs(const LayerSpec& layer, const Shape& output_shape);

/// Per-sample forward MACs of the whole network at spec.input_shape.
std::uint64_t count_macs(const ModelSpec& spec);

}  // namespace fedhm
