#include "fedhm/model.hpp"

#include <cmath>
#include <random>

#include "fedhm/errors.hpp"
#include "fedhm/factorize.hpp"

namespace fedhm {

bool is_trainable(std::string_view name) {
  return name != "running_mean" && name != "running_var";
}

std::map<std::string, Shape> parameter_shapes(const LayerSpec& l) {
  std::map<std::string, Shape> s;
  switch (l.kind) {
    case LayerKind::Dense:
      s["W"] = {l.in_channels, l.out_channels};
      if (l.bias) s["b"] = {l.out_channels};
      break;
    case LayerKind::FactorizedDense:
      s["U"] = {l.in_channels, l.rank};
      s["V"] = {l.out_channels, l.rank};
      if (l.bias) s["b"] = {l.out_channels};
      break;
    case LayerKind::Conv2D:
      s["W"] = {l.out_channels, l.in_channels, l.kernel, l.kernel};
      break;
    case LayerKind::FactorizedConv:
      s["U"] = {l.rank, l.in_channels, l.kernel, 1};
      s["V"] = {l.out_channels, l.rank, 1, l.kernel};
      break;
    case LayerKind::BatchNorm:
      for (const char* n : {"gamma", "beta", "running_mean", "running_var"}) s[n] = {l.out_channels};
      break;
    default:
      break;
  }
  return s;
}

Model materialize(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  std::mt19937_64 rng(seed);
  Model model{spec, std::vector<ParamMap>(spec.layers.size())};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const double fan_in = static_cast<double>(l.is_conv() ? l.in_channels * l.kernel * l.kernel
                                                          : l.in_channels);
    for (auto& [name, shape] : parameter_shapes(l)) {
      Tensor t(shape);
      if (name == "W") {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (auto& v : t.data()) v = dist(rng);
      } else if (name == "U" || name == "V") {
        const double sd = std::pow(2.0 / (fan_in * static_cast<double>(l.rank)), 0.25);
        std::normal_distribution<double> dist(0.0, sd);
        for (auto& v : t.data()) v = dist(rng);
      } else if (name == "gamma" || name == "running_var") {
        t.fill(1.0);
      }
      model.params[i].emplace(name, std::move(t));
    }
  }
  return model;
}

std::vector<ParamMap> zeros_like(const Model& model, bool trainable_only) {
  std::vector<ParamMap> out(model.params.size());
  for (std::size_t i = 0; i < model.params.size(); ++i)
    for (const auto& [name, t] : model.params[i])
      if (!trainable_only || is_trainable(name)) out[i].emplace(name, Tensor(t.shape()));
  return out;
}

Model recover_model(const Model& model) {
  Model out = model;
  out.spec = unfactorized(model.spec);
  for (std::size_t i = 0; i < model.spec.layers.size(); ++i) {
    if (!model.spec.layers[i].is_factorized()) continue;
    ParamMap& p = out.params[i];
    Tensor W = recover_weight(p.at("U"), p.at("V"));
    p.erase("U");
    p.erase("V");
    p.emplace("W", std::move(W));
  }
  return out;
}

Model factorize_model(const Model& model, const HybridPlan& plan) {
  const Model full = recover_model(model);
  Model out = full;
  out.spec = make_hybrid(full.spec, plan);
  for (std::size_t i = 0; i < out.spec.layers.size(); ++i) {
    const LayerSpec& l = out.spec.layers[i];
    if (!l.is_factorized()) continue;
    ParamMap& p = out.params[i];
    FactorizedPair pair = spectral_factorize(p.at("W"), l.rank, l.name);
    p.erase("W");
    p.emplace("U", std::move(pair.U));
    p.emplace("V", std::move(pair.V));
  }
  return out;
}

namespace {

bool nested(const Shape& slim, const Shape& full) {
  if (slim.size() != full.size()) return false;
  for (std::size_t d = 0; d < slim.size(); ++d)
    if (slim[d] > full[d]) return false;
  return true;
}

}  // namespace

Model slice_model(const Model& full, const ModelSpec& slim_spec) {
  if (slim_spec.layers.size() != full.spec.layers.size()) {
    throw ValueError("slice_model: layer count differs");
  }
  Model out{slim_spec, std::vector<ParamMap>(slim_spec.layers.size())};
  for (std::size_t i = 0; i < slim_spec.layers.size(); ++i) {
    const LayerSpec& sl = slim_spec.layers[i];
    const LayerSpec& fl = full.spec.layers[i];
    if (sl.kind != fl.kind || sl.name != fl.name) {
      throw ValueError("slice_model: layer " + std::to_string(i) + " differs in kind or name");
    }
    for (const auto& [name, shape] : parameter_shapes(sl)) {
      const Tensor& src = full.params[i].at(name);
      if (!nested(shape, src.shape())) {
        throw ValueError("slice_model: " + sl.name + "/" + name + " " + shape_string(shape) +
                         " is not nested in " + shape_string(src.shape()));
      }
      Tensor dst(shape);
      const Shape& fs = src.shape();
      // Walk destination coordinates in row-major order.
      std::vector<std::size_t> idx(shape.size(), 0);
      for (std::size_t flat = 0; flat < dst.size(); ++flat) {
        std::size_t off = 0;
        for (std::size_t d = 0; d < shape.size(); ++d) off = off * fs[d] + idx[d];
        dst[flat] = src[off];
        for (std::size_t d = shape.size(); d-- > 0;) {
          if (++idx[d] < shape[d]) break;
          idx[d] = 0;
        }
      }
      out.params[i].emplace(name, std::move(dst));
    }
  }
  return out;
}

void require_same_structure(const Model& a, const Model& b) {
  if (a.spec != b.spec) {
    throw DimensionError("models `" + a.spec.name + "` and `" + b.spec.name + "` have different specs");
  }
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].size() != b.params[i].size()) throw DimensionError("parameter sets differ");
    for (const auto& [name, t] : a.params[i]) {
      auto it = b.params[i].find(name);
      if (it == b.params[i].end() || it->second.shape() != t.shape()) {
        throw DimensionError("parameter " + a.spec.layers[i].name + "/" + name + " differs");
      }
    }
  }
}

}  // namespace fedhm
