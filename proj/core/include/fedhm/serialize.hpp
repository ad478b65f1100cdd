#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fedhm/model.hpp"

namespace fedhm {

/// Flat little-endian weight container:
///
///   "FEDHM1"            6 bytes magic
///   spec hash           u64
///   tensor count        u32
///   per tensor:
///     name length       u32, then name bytes ("<layer>/<param>")
///     ndim              u32, then ndim x u64 extents
///     dtype tag         u8 (1 = float64, 2 = float32)
///     payload           product(extents) little-endian values
///
/// Tensors appear in layer order, parameters in name order.
inline constexpr char kWeightsMagic[6] = {'F', 'E', 'D', 'H', 'M', '1'};
inline constexpr std::uint8_t kDtypeF64 = 1;
inline constexpr std::uint8_t kDtypeF32 = 2;

std::vector<std::uint8_t> encode_weights(const Model& model);
/// Decodes into the structure of `spec`; throws FormatError on any mismatch.
Model decode_weights(const std::vector<std::uint8_t>& bytes, const ModelSpec& spec);

void save_weights(const Model& model, const std::filesystem::path& path);
Model load_weights(const std::filesystem::path& path, const ModelSpec& spec);

}  // namespace fedhm
