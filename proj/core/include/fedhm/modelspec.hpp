#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fedhm/tensor.hpp"

namespace fedhm {

enum class LayerKind {
  Dense,
  Conv2D,
  FactorizedDense,
  FactorizedConv,
  BatchNorm,
  ReLU,
  AvgPool,  // global average pool, (C, H, W) -> (C, 1, 1)
  Flatten,
  Add,      // elementwise sum of two producers (residual join)
};

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// Producer index meaning "the network input".
inline constexpr int kNetworkInput = -1;

/// One node of the model graph. Layers are stored in topological order and
/// reference their producers by index.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::ReLU;
  std::vector<int> inputs{};
  std::size_t in_channels = 0;   // dense: input features
  std::size_t out_channels = 0;  // dense: output features; batchnorm: channels
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t rank = 0;  // factorized kinds only
  bool bias = false;     // dense kinds only

  bool is_weighted() const noexcept {
    return kind == LayerKind::Dense || kind == LayerKind::Conv2D ||
           kind == LayerKind::FactorizedDense || kind == LayerKind::FactorizedConv;
  }
  bool is_factorized() const noexcept {
    return kind == LayerKind::FactorizedDense || kind == LayerKind::FactorizedConv;
  }
  bool is_conv() const noexcept {
    return kind == LayerKind::Conv2D || kind == LayerKind::FactorizedConv;
  }
  /// Shape of the full-rank weight: (m, n) for dense, (n, m, k, k) for conv.
  Shape full_weight_shape() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelSpec {
  std::string name;
  Shape input_shape{};  // per sample: (C, H, W) or (d)
  std::size_t classes = 0;
  std::vector<LayerSpec> layers{};

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Per-sample output shape of every layer. Throws DimensionError when the
/// graph does not compose.
std::vector<Shape> infer_shapes(const ModelSpec& spec);

/// Full structural validation: producers precede consumers, channels and
/// extents compose, factorized ranks are admissible and the network ends in
/// a `classes`-wide vector.
void validate(const ModelSpec& spec);

/// FNV-1a hash of the canonical text form.
std::uint64_t spec_hash(const ModelSpec& spec);
std::string canonical_text(const ModelSpec& spec);

std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const std::string& text);

// Builders -------------------------------------------------------------------

/// CIFAR-style ResNet with basic blocks: 3x3 stem, four stages of widths
/// 64/128/256/512, global average pool, dense classifier.
ModelSpec build_resnet_cifar(const std::array<std::size_t, 4>& blocks, std::size_t classes,
                             std::string name, std::size_t in_channels = 3,
                             std::size_t image_size = 32);
ModelSpec build_resnet18_cifar(std::size_t classes);
ModelSpec build_resnet34_cifar(std::size_t classes);

/// Three conv-BN-ReLU stages (the last one with stride 2), global average
/// pool and a dense classifier.
ModelSpec build_tiny_cnn(std::size_t in_channels, std::size_t classes, std::size_t image_size = 8,
                         std::array<std::size_t, 3> widths = {8, 16, 32});

// Hybrid (partially factorized) models ---------------------------------------

/// `rho` counts weighted layers (conv and dense) in forward order; layers with
/// index >= rho are factorized at rank layer_rank(shape, gamma). The stem
/// (first weighted layer) and the classifier (last one) stay full unless the
/// corresponding override is set.
struct HybridPlan {
  std::size_t rho = 0;
  double gamma = 1.0;
  bool factorize_stem = false;
  bool factorize_classifier = false;

  friend bool operator==(const HybridPlan&, const HybridPlan&) = default;
};

/// Layer indices of the weighted layers, in forward order.
std::vector<std::size_t> weighted_layers(const ModelSpec& spec);

/// Value of rho that leaves everything before stage `stage` (1-based, named
/// "layer<stage>.") unfactorized. Stages past the last map to L.
std::size_t rho_for_stage(const ModelSpec& spec, std::size_t stage);

/// Rank assigned to each weighted layer by the plan (0 = stays full).
std::vector<std::size_t> resolve_ranks(const ModelSpec& spec, const HybridPlan& plan);

ModelSpec make_hybrid(const ModelSpec& spec, const HybridPlan& plan);

/// The spec with every factorized layer turned back into its full-rank kind.
ModelSpec unfactorized(const ModelSpec& spec);

/// Scales every hidden channel width to max(1, floor(omega * width)). Input
/// channels and classifier outputs are unchanged; a slim model's channels are
/// the leading slice of the full model's channels.
ModelSpec width_slim(const ModelSpec& spec, double omega);

}  // namespace fedhm
