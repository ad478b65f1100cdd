#include "fedhm/aggregate.hpp"

#include <algorithm>
#include <cmath>

#include "fedhm/errors.hpp"

namespace fedhm {

std::vector<double> aggregation_weights(std::span<const double> ratios, double tau) {
  if (ratios.empty()) throw ValueError("aggregation needs at least one participant");
  if (!(tau > 0.0)) throw ValueError("softmax temperature must be positive");
  const std::size_t p = ratios.size();
  if (std::isinf(tau)) return std::vector<double>(p, 1.0 / static_cast<double>(p));
  const double mx = *std::max_element(ratios.begin(), ratios.end()) / tau;
  std::vector<double> w(p);
  double sum = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    w[i] = std::exp(ratios[i] / tau - mx);
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

Model weighted_average(std::span<const Model> models, std::span<const double> weights) {
  if (models.empty()) throw ValueError("cannot average zero models");
  if (weights.size() != models.size()) throw DimensionError("one weight per model required");
  for (std::size_t i = 1; i < models.size(); ++i) require_same_structure(models[0], models[i]);

  const bool uniform = std::all_of(weights.begin(), weights.end(),
                                   [&](double w) { return w == weights[0]; });
  const double count = static_cast<double>(models.size());
  Model out = models[0];
  for (std::size_t l = 0; l < out.params.size(); ++l) {
    for (auto& [name, t] : out.params[l]) {
      for (std::size_t k = 0; k < t.size(); ++k) {
        double acc = 0.0;
        if (uniform) {
          for (const Model& m : models) acc += m.params[l].at(name)[k];
          acc /= count;
        } else {
          for (std::size_t p = 0; p < models.size(); ++p) acc += weights[p] * models[p].params[l].at(name)[k];
        }
        t[k] = acc;
      }
    }
  }
  return out;
}

Model aggregate(std::span<const Model> recovered, std::span<const double> ratios, double tau) {
  if (recovered.size() != ratios.size()) throw DimensionError("one rank ratio per model required");
  for (const Model& m : recovered) {
    for (const auto& l : m.spec.layers) {
      if (l.is_factorized()) throw ValueError("aggregate expects recovered full-rank models");
    }
  }
  const auto w = aggregation_weights(ratios, tau);
  return weighted_average(recovered, w);
}

Model fedavg_round(std::span<const Model> models, std::span<const std::size_t> sizes) {
  if (sizes.size() != models.size()) throw DimensionError("one data size per model required");
  double total = 0.0;
  for (std::size_t s : sizes) total += static_cast<double>(s);
  if (!(total > 0.0)) throw ValueError("fedavg needs a positive total data size");
  std::vector<double> w(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) w[i] = static_cast<double>(sizes[i]) / total;
  return weighted_average(models, w);
}

Model heterofl_aggregate(const Model& previous, std::span<const Model> slim_models) {
  if (slim_models.empty()) throw ValueError("heterofl_aggregate needs at least one model");
  const ModelSpec& full = previous.spec;
  for (const Model& m : slim_models) {
    if (m.spec.layers.size() != full.layers.size()) throw ValueError("slim model is not nested: layer count differs");
    for (std::size_t i = 0; i < full.layers.size(); ++i) {
      if (m.spec.layers[i].kind != full.layers[i].kind || m.spec.layers[i].name != full.layers[i].name) {
        throw ValueError("slim model is not nested: layer `" + m.spec.layers[i].name + "` differs");
      }
      for (const auto& [name, t] : m.params[i]) {
        const auto it = previous.params[i].find(name);
        if (it == previous.params[i].end() || t.rank() != it->second.rank()) {
          throw ValueError("slim model is not nested at " + full.layers[i].name + "/" + name);
        }
        for (std::size_t d = 0; d < t.rank(); ++d) {
          if (t.dim(d) > it->second.dim(d)) {
            throw ValueError("slim model is not nested at " + full.layers[i].name + "/" + name);
          }
        }
      }
    }
  }

  Model out = previous;
  for (std::size_t i = 0; i < full.layers.size(); ++i) {
    for (auto& [name, target] : out.params[i]) {
      const Shape& fs = target.shape();
      std::vector<double> sum(target.size(), 0.0);
      std::vector<std::size_t> count(target.size(), 0);
      for (const Model& m : slim_models) {
        const Tensor& src = m.params[i].at(name);
        const Shape& ss = src.shape();
        std::vector<std::size_t> idx(ss.size(), 0);
        for (std::size_t flat = 0; flat < src.size(); ++flat) {
          std::size_t off = 0;
          for (std::size_t d = 0; d < ss.size(); ++d) off = off * fs[d] + idx[d];
          sum[off] += src[flat];
          ++count[off];
          for (std::size_t d = ss.size(); d-- > 0;) {
            if (++idx[d] < ss[d]) break;
            idx[d] = 0;
          }
        }
      }
      for (std::size_t k = 0; k < target.size(); ++k)
        if (count[k] > 0) target[k] = sum[k] / static_cast<double>(count[k]);
    }
  }
  return out;
}

}  // namespace fedhm
