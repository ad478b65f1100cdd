#pragma once

#include <vector>

#include "fedhm/layers.hpp"
#include "fedhm/model.hpp"

namespace fedhm {

/// Activations cached by a training-mode forward pass.
struct Trace {
  Tensor input;
  std::vector<Tensor> outputs;
  std::vector<Tensor> hidden;  // factorized-conv intermediates
  std::vector<nn::BatchNormCache> batchnorm;

  bool valid() const noexcept { return !outputs.empty(); }
};

/// Training forward: BatchNorm uses batch statistics and updates the running
/// estimates stored in `model`. x is (batch, input_shape...).
Tensor forward_train(Model& model, const Tensor& x, Trace& trace);

/// Inference forward with running BatchNorm statistics.
Tensor forward_eval(const Model& model, const Tensor& x);

struct Gradients {
  std::vector<ParamMap> params;  // trainable tensors only
  Tensor input;
};

/// Backpropagates `grad_output` (d loss / d logits) through the cached trace.
/// Throws StateError if `trace` does not come from a forward pass of this model.
Gradients backward(const Model& model, const Trace& trace, const Tensor& grad_output);

}  // namespace fedhm
