#pragma once

#include <vector>

#include "fedhm/model.hpp"

namespace fedhm {

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;     // unfactorized weights
  double frobenius_decay = 1e-4;  // factorized (U, V) pairs

  void validate() const;
  friend bool operator==(const SgdConfig&, const SgdConfig&) = default;
};

/// Optimizer state for one local training session. Velocities are created
/// lazily with the shapes of the parameters they track.
struct SgdState {
  SgdConfig config;
  std::vector<ParamMap> velocity;
};

/// Decay term added to the gradient of every trainable tensor of layer `i`:
/// wd * W for full weights, the Frobenius-decay gradient for factorized
/// pairs, nothing for biases and BatchNorm scale/shift.
ParamMap decay_terms(const Model& model, std::size_t layer, const SgdConfig& config);

/// v <- momentum * v + (g + decay);  p <- p - lr * v.
void sgd_step(Model& model, const std::vector<ParamMap>& grads, SgdState& state);

}  // namespace fedhm
