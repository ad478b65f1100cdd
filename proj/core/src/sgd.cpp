#include "fedhm/sgd.hpp"

#include "fedhm/errors.hpp"
#include "fedhm/factorize.hpp"

namespace fedhm {

void SgdConfig::validate() const {
  if (lr < 0.0) throw ValueError("learning rate must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw ValueError("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ValueError("weight decay must be non-negative");
  if (frobenius_decay < 0.0) throw ValueError("Frobenius decay must be non-negative");
}

ParamMap decay_terms(const Model& model, std::size_t i, const SgdConfig& config) {
  ParamMap out;
  const LayerSpec& l = model.spec.layers[i];
  const ParamMap& p = model.params[i];
  if (l.kind == LayerKind::Dense || l.kind == LayerKind::Conv2D) {
    if (config.weight_decay != 0.0) out.emplace("W", config.weight_decay * p.at("W"));
  } else if (l.is_factorized()) {
    if (config.frobenius_decay != 0.0) {
      auto [gU, gV] = frobenius_decay_grad(p.at("U"), p.at("V"), config.frobenius_decay);
      out.emplace("U", std::move(gU));
      out.emplace("V", std::move(gV));
    }
  }
  return out;
}

void sgd_step(Model& model, const std::vector<ParamMap>& grads, SgdState& state) {
  state.config.validate();
  if (grads.size() != model.params.size()) {
    throw DimensionError("sgd_step: gradients for " + std::to_string(grads.size()) +
                         " layers, model has " + std::to_string(model.params.size()));
  }
  if (state.velocity.empty()) state.velocity = zeros_like(model);
  const double lr = state.config.lr;
  const double mu = state.config.momentum;

  for (std::size_t i = 0; i < model.params.size(); ++i) {
    // Decay terms read the pre-update values of both factors.
    const ParamMap decay = decay_terms(model, i, state.config);
    for (auto& [name, param] : model.params[i]) {
      if (!is_trainable(name)) continue;
      const auto git = grads[i].find(name);
      if (git == grads[i].end() || git->second.shape() != param.shape()) {
        throw DimensionError("sgd_step: gradient for " + model.spec.layers[i].name + "/" + name +
                             " missing or misshapen");
      }
      Tensor& v = state.velocity[i].at(name);
      if (v.shape() != param.shape()) v = Tensor(param.shape());
      const auto dit = decay.find(name);
      const Tensor* d = dit == decay.end() ? nullptr : &dit->second;
      for (std::size_t k = 0; k < param.size(); ++k) {
        const double step = git->second[k] + (d ? (*d)[k] : 0.0);
        v[k] = mu * v[k] + step;
        param[k] -= lr * v[k];
      }
    }
  }
}

}  // namespace fedhm
