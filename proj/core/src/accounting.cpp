#include "fedhm/accounting.hpp"

namespace fedhm {

std::uint64_t count_params(const LayerSpec& l) {
  const std::uint64_t bias = l.bias ? l.out_channels : 0;
  switch (l.kind) {
    case LayerKind::Dense:
      return dense_params(l.in_channels, l.out_channels) + bias;
    case LayerKind::FactorizedDense:
      return factorized_dense_params(l.in_channels, l.out_channels, l.rank) + bias;
    case LayerKind::Conv2D:
      return conv_params(l.in_channels, l.out_channels, l.kernel);
    case LayerKind::FactorizedConv:
      return factorized_conv_params(l.in_channels, l.out_channels, l.kernel, l.rank);
    case LayerKind::BatchNorm:
      return 2 * static_cast<std::uint64_t>(l.out_channels);
    default:
      return 0;
  }
}

std::uint64_t count_params(const ModelSpec& spec) {
  std::uint64_t total = 0;
  for (const auto& l : spec.layers) total += count_params(l);
  return total;
}

std::uint64_t count_params(const Model& model) {
  std::uint64_t total = 0;
  for (const auto& layer : model.params)
    for (const auto& [name, t] : layer)
      if (is_trainable(name)) total += t.size();
  return total;
}

std::uint64_t count_buffers(const ModelSpec& spec) {
  std::uint64_t total = 0;
  for (const auto& l : spec.layers)
    if (l.kind == LayerKind::BatchNorm) total += 2 * static_cast<std::uint64_t>(l.out_channels);
  return total;
}

std::uint64_t layer_macs(const LayerSpec& l, const Shape& out) {
  switch (l.kind) {
    case LayerKind::Dense:
      return dense_params(l.in_channels, l.out_channels);
    case LayerKind::FactorizedDense:
      return factorized_dense_params(l.in_channels, l.out_channels, l.rank);
    case LayerKind::Conv2D:
      return conv_macs(l.in_channels, l.out_channels, l.kernel, out.at(1), out.at(2));
    case LayerKind::FactorizedConv:
      return factorized_conv_macs(l.in_channels, l.out_channels, l.kernel, l.rank, out.at(1),
                                  out.at(2));
    default:
      return 0;
  }
}

std::uint64_t count_macs(const ModelSpec& spec) {
  const auto shapes = infer_shapes(spec);
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) total += layer_macs(spec.layers[i], shapes[i]);
  return total;
}

}  // namespace fedhm
