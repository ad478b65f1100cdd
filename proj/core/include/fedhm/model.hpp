#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fedhm/modelspec.hpp"
#include "fedhm/tensor.hpp"

namespace fedhm {

/// Named tensors of one layer: W, b, U, V, gamma, beta, running_mean, running_var.
using ParamMap = std::map<std::string, Tensor>;

/// A materialized ModelSpec. `params[i]` holds the tensors of `spec.layers[i]`
/// (empty for parameter-free layers).
struct Model {
  ModelSpec spec;
  std::vector<ParamMap> params;

  friend bool operator==(const Model&, const Model&) = default;
};

/// Running BatchNorm statistics are buffers: aggregated like parameters but
/// never trained or counted as parameters.
bool is_trainable(std::string_view param_name);

/// Shapes of the tensors a layer owns, in ParamMap order.
std::map<std::string, Shape> parameter_shapes(const LayerSpec& layer);

/// Allocates a model with He (fan-in) normal initialization drawn from `seed`.
/// Biases and BN shifts start at 0, BN scales and running variances at 1.
/// Factorized layers get factors whose product has He variance.
Model materialize(const ModelSpec& spec, std::uint64_t seed);

/// Zero-valued tensors with the model's structure (used for gradients).
std::vector<ParamMap> zeros_like(const Model& model, bool trainable_only = true);

/// Replaces every layer selected by the plan with its spectral factorization.
/// A model that already holds factorized layers is recovered first.
Model factorize_model(const Model& model, const HybridPlan& plan);

/// Turns every factorized layer back into a full-rank weight. Identity on a
/// model without factorized layers.
Model recover_model(const Model& model);

/// Leading-slice view of `full` with the (narrower) shapes of `slim_spec`.
/// Throws ValueError if the slim spec is not nested in the full one.
Model slice_model(const Model& full, const ModelSpec& slim_spec);

/// Throws DimensionError unless both models have identical specs and tensor shapes.
void require_same_structure(const Model& a, const Model& b);

}  // namespace fedhm
