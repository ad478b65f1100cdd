#pragma once

#include <limits>
#include <span>
#include <vector>

#include "fedhm/model.hpp"

namespace fedhm {

/// tau = +inf selects uniform weights.
inline constexpr double kInfiniteTemperature = std::numeric_limits<double>::infinity();

/// alpha_p = exp(gamma_p / tau) / sum_q exp(gamma_q / tau); uniform when tau is infinite.
std::vector<double> aggregation_weights(std::span<const double> rank_ratios, double tau);

/// sum_p weights[p] * models[p], tensor by tensor (BatchNorm buffers included).
/// Equal weights take the plain-mean path, (sum_p models[p]) / P, so that the
/// uniform case is bit-identical however the weights were produced.
Model weighted_average(std::span<const Model> models, std::span<const double> weights);

/// Rank-ratio-weighted aggregation of recovered (full-rank) client models.
Model aggregate(std::span<const Model> recovered, std::span<const double> rank_ratios, double tau);

/// Data-size-weighted FedAvg of homogeneous models.
Model fedavg_round(std::span<const Model> models, std::span<const std::size_t> data_sizes);

/// Channel aggregation over nested width-slimmed models: every coordinate of
/// the full model becomes the mean over the clients whose slim model contains
/// it; coordinates no client covers keep their value from `previous`.
Model heterofl_aggregate(const Model& previous, std::span<const Model> slim_models);

}  // namespace fedhm
