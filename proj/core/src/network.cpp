#include "fedhm/network.hpp"

#include "fedhm/errors.hpp"

namespace fedhm {

namespace {

std::vector<int> producers_of(const ModelSpec& spec, std::size_t i) {
  const LayerSpec& l = spec.layers[i];
  if (!l.inputs.empty()) return l.inputs;
  return {i == 0 ? kNetworkInput : static_cast<int>(i) - 1};
}

void check_input(const ModelSpec& spec, const Tensor& x) {
  Shape expected{x.rank() ? x.dim(0) : 0};
  expected.insert(expected.end(), spec.input_shape.begin(), spec.input_shape.end());
  if (x.shape() != expected) {
    throw DimensionError("model `" + spec.name + "` expects input (batch, " +
                         shape_string(spec.input_shape) + "), got " + shape_string(x.shape()));
  }
}

template <bool Train>
Tensor run_forward(const Model& cmodel, Model* mut, const Tensor& x, Trace* trace) {
  const ModelSpec& spec = cmodel.spec;
  check_input(spec, x);
  const std::size_t L = spec.layers.size();
  std::vector<Tensor> outs(L);
  if constexpr (Train) {
    trace->input = x;
    trace->hidden.assign(L, Tensor{});
    trace->batchnorm.assign(L, nn::BatchNormCache{});
  }
  static const Tensor kNone;
  for (std::size_t i = 0; i < L; ++i) {
    const LayerSpec& l = spec.layers[i];
    const ParamMap& p = cmodel.params[i];
    const auto prod = producers_of(spec, i);
    const Tensor& in = prod[0] == kNetworkInput ? x : outs[static_cast<std::size_t>(prod[0])];
    switch (l.kind) {
      case LayerKind::Dense:
        outs[i] = nn::dense_forward(in, p.at("W"), l.bias ? p.at("b") : kNone);
        break;
      case LayerKind::FactorizedDense:
        outs[i] = nn::factorized_dense_forward(in, p.at("U"), p.at("V"), l.bias ? p.at("b") : kNone);
        break;
      case LayerKind::Conv2D:
        outs[i] = nn::conv2d_forward(in, p.at("W"), nn::ConvGeometry::square(l.stride, l.padding));
        break;
      case LayerKind::FactorizedConv:
        if constexpr (Train) {
          outs[i] = nn::factorized_conv_forward(in, p.at("U"), p.at("V"), l.stride, l.padding,
                                                &trace->hidden[i]);
        } else {
          outs[i] = nn::factorized_conv_forward(in, p.at("U"), p.at("V"), l.stride, l.padding);
        }
        break;
      case LayerKind::BatchNorm:
        if constexpr (Train) {
          ParamMap& mp = mut->params[i];
          outs[i] = nn::batchnorm_forward_train(in, p.at("gamma"), p.at("beta"),
                                                mp.at("running_mean"), mp.at("running_var"),
                                                &trace->batchnorm[i]);
        } else {
          outs[i] = nn::batchnorm_forward_eval(in, p.at("gamma"), p.at("beta"),
                                               p.at("running_mean"), p.at("running_var"));
        }
        break;
      case LayerKind::ReLU:
        outs[i] = nn::relu_forward(in);
        break;
      case LayerKind::AvgPool:
        outs[i] = nn::global_avg_pool_forward(in);
        break;
      case LayerKind::Flatten:
        outs[i] = nn::flatten_forward(in);
        break;
      case LayerKind::Add: {
        const Tensor& other =
            prod[1] == kNetworkInput ? x : outs[static_cast<std::size_t>(prod[1])];
        outs[i] = in + other;
        break;
      }
    }
  }
  Tensor result = outs.back();
  result.check_finite("forward pass");
  if constexpr (Train) trace->outputs = std::move(outs);
  return result;
}

void accumulate(Tensor& slot, const Tensor& g) {
  if (slot.empty()) {
    slot = g;
  } else {
    axpy(1.0, g, slot);
  }
}

}  // namespace

Tensor forward_train(Model& model, const Tensor& x, Trace& trace) {
  return run_forward<true>(model, &model, x, &trace);
}

Tensor forward_eval(const Model& model, const Tensor& x) {
  return run_forward<false>(model, nullptr, x, nullptr);
}

Gradients backward(const Model& model, const Trace& trace, const Tensor& grad_output) {
  const ModelSpec& spec = model.spec;
  const std::size_t L = spec.layers.size();
  if (!trace.valid() || trace.outputs.size() != L) {
    throw StateError("backward called before a training forward pass of this model");
  }
  if (grad_output.shape() != trace.outputs.back().shape()) {
    throw DimensionError("upstream gradient " + shape_string(grad_output.shape()) +
                         " does not match output " + shape_string(trace.outputs.back().shape()));
  }
  Gradients g{zeros_like(model), Tensor{}};
  std::vector<Tensor> out_grads(L);
  out_grads[L - 1] = grad_output;

  auto input_of = [&](int p) -> const Tensor& {
    return p == kNetworkInput ? trace.input : trace.outputs[static_cast<std::size_t>(p)];
  };
  auto send = [&](int p, const Tensor& grad) {
    if (p == kNetworkInput) {
      accumulate(g.input, grad);
    } else {
      accumulate(out_grads[static_cast<std::size_t>(p)], grad);
    }
  };

  for (std::size_t i = L; i-- > 0;) {
    if (out_grads[i].empty()) continue;
    const Tensor& go = out_grads[i];
    const LayerSpec& l = spec.layers[i];
    const ParamMap& p = model.params[i];
    ParamMap& gp = g.params[i];
    const auto prod = producers_of(spec, i);
    const Tensor& in = input_of(prod[0]);
    switch (l.kind) {
      case LayerKind::Dense: {
        auto r = nn::dense_backward(in, p.at("W"), l.bias, go);
        gp.at("W") = std::move(r.dW);
        if (l.bias) gp.at("b") = std::move(r.db);
        send(prod[0], r.dx);
        break;
      }
      case LayerKind::FactorizedDense: {
        auto r = nn::factorized_dense_backward(in, p.at("U"), p.at("V"), l.bias, go);
        gp.at("U") = std::move(r.dU);
        gp.at("V") = std::move(r.dV);
        if (l.bias) gp.at("b") = std::move(r.db);
        send(prod[0], r.dx);
        break;
      }
      case LayerKind::Conv2D: {
        auto r = nn::conv2d_backward(in, p.at("W"), nn::ConvGeometry::square(l.stride, l.padding), go);
        gp.at("W") = std::move(r.dW);
        send(prod[0], r.dx);
        break;
      }
      case LayerKind::FactorizedConv: {
        auto r = nn::factorized_conv_backward(in, trace.hidden[i], p.at("U"), p.at("V"), l.stride,
                                              l.padding, go);
        gp.at("U") = std::move(r.dU);
        gp.at("V") = std::move(r.dV);
        send(prod[0], r.dx);
        break;
      }
      case LayerKind::BatchNorm: {
        auto r = nn::batchnorm_backward(trace.batchnorm[i], p.at("gamma"), go);
        gp.at("gamma") = std::move(r.dgamma);
        gp.at("beta") = std::move(r.dbeta);
        send(prod[0], r.dx);
        break;
      }
      case LayerKind::ReLU:
        send(prod[0], nn::relu_backward(in, go));
        break;
      case LayerKind::AvgPool:
        send(prod[0], nn::global_avg_pool_backward(in.shape(), go));
        break;
      case LayerKind::Flatten:
        send(prod[0], go.reshaped(in.shape()));
        break;
      case LayerKind::Add:
        send(prod[0], go);
        send(prod[1], go);
        break;
    }
  }
  if (g.input.empty()) g.input = Tensor(trace.input.shape());
  return g;
}

}  // namespace fedhm
