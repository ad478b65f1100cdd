#include "fedhm/modelspec.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "fedhm/errors.hpp"
#include "fedhm/factorize.hpp"
#include "fedhm/layers.hpp"

namespace fedhm {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 9> kKindNames{{
    {LayerKind::Dense, "Dense"},
    {LayerKind::Conv2D, "Conv2D"},
    {LayerKind::FactorizedDense, "FactorizedDense"},
    {LayerKind::FactorizedConv, "FactorizedConv"},
    {LayerKind::BatchNorm, "BatchNorm"},
    {LayerKind::ReLU, "ReLU"},
    {LayerKind::AvgPool, "AvgPool"},
    {LayerKind::Flatten, "Flatten"},
    {LayerKind::Add, "Add"},
}};

std::vector<int> producers(const LayerSpec& layer, std::size_t index) {
  if (!layer.inputs.empty()) return layer.inputs;
  return {index == 0 ? kNetworkInput : static_cast<int>(index) - 1};
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "Unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw ValueError("unknown layer kind `" + std::string(name) + "`");
}

Shape LayerSpec::full_weight_shape() const {
  switch (kind) {
    case LayerKind::Dense:
    case LayerKind::FactorizedDense:
      return {in_channels, out_channels};
    case LayerKind::Conv2D:
    case LayerKind::FactorizedConv:
      return {out_channels, in_channels, kernel, kernel};
    default:
      throw ValueError("layer `" + name + "` has no weight");
  }
}

std::vector<Shape> infer_shapes(const ModelSpec& spec) {
  if (spec.input_shape.empty()) throw DimensionError("model `" + spec.name + "` has no input shape");
  std::vector<Shape> shapes;
  shapes.reserve(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const auto fail = [&](const std::string& why) {
      return DimensionError("layer " + std::to_string(i) + " `" + l.name + "` (" +
                            std::string(to_string(l.kind)) + "): " + why);
    };
    std::vector<Shape> in;
    for (int p : producers(l, i)) {
      if (p == kNetworkInput) {
        in.push_back(spec.input_shape);
      } else if (p >= 0 && static_cast<std::size_t>(p) < i) {
        in.push_back(shapes[static_cast<std::size_t>(p)]);
      } else {
        throw fail("producer index " + std::to_string(p) + " does not precede the layer");
      }
    }
    const std::size_t expected_inputs = l.kind == LayerKind::Add ? 2 : 1;
    if (in.size() != expected_inputs) {
      throw fail("expects " + std::to_string(expected_inputs) + " producer(s), has " +
                 std::to_string(in.size()));
    }
    const Shape& x = in[0];
    switch (l.kind) {
      case LayerKind::Dense:
      case LayerKind::FactorizedDense: {
        if (x.size() != 1 || x[0] != l.in_channels) {
          throw fail("input " + shape_string(x) + " does not match " +
                     std::to_string(l.in_channels) + " features");
        }
        if (l.out_channels == 0) throw fail("zero output features");
        if (l.kind == LayerKind::FactorizedDense &&
            (l.rank == 0 || l.rank > std::min(l.in_channels, l.out_channels))) {
          throw fail("rank " + std::to_string(l.rank) + " outside [1, min(m, n)]");
        }
        shapes.push_back({l.out_channels});
        break;
      }
      case LayerKind::Conv2D:
      case LayerKind::FactorizedConv: {
        if (x.size() != 3 || x[0] != l.in_channels) {
          throw fail("input " + shape_string(x) + " does not match " +
                     std::to_string(l.in_channels) + " channels");
        }
        if (l.kernel == 0 || l.out_channels == 0) throw fail("zero kernel or output channels");
        if (l.kind == LayerKind::FactorizedConv &&
            (l.rank == 0 || l.rank > max_rank(l.full_weight_shape()))) {
          throw fail("rank " + std::to_string(l.rank) + " outside [1, min(mk, nk)]");
        }
        const std::size_t h = nn::conv_output_extent(x[1], l.kernel, l.stride, l.padding);
        const std::size_t w = nn::conv_output_extent(x[2], l.kernel, l.stride, l.padding);
        shapes.push_back({l.out_channels, h, w});
        break;
      }
      case LayerKind::BatchNorm:
        if (x.empty() || x[0] != l.out_channels) {
          throw fail("input " + shape_string(x) + " does not match " +
                     std::to_string(l.out_channels) + " channels");
        }
        shapes.push_back(x);
        break;
      case LayerKind::ReLU:
        shapes.push_back(x);
        break;
      case LayerKind::AvgPool:
        if (x.size() != 3) throw fail("global average pool needs a (C, H, W) input");
        shapes.push_back({x[0], 1, 1});
        break;
      case LayerKind::Flatten:
        shapes.push_back({shape_size(x)});
        break;
      case LayerKind::Add:
        if (in[0] != in[1]) {
          throw fail("summands " + shape_string(in[0]) + " and " + shape_string(in[1]) + " differ");
        }
        shapes.push_back(x);
        break;
    }
  }
  return shapes;
}

void validate(const ModelSpec& spec) {
  if (spec.layers.empty()) throw DimensionError("model `" + spec.name + "` has no layers");
  if (spec.classes < 2) throw ValueError("model `" + spec.name + "` needs at least 2 classes");
  const auto shapes = infer_shapes(spec);
  if (shapes.back() != Shape{spec.classes}) {
    throw DimensionError("model `" + spec.name + "` ends in " + shape_string(shapes.back()) +
                         ", expected (" + std::to_string(spec.classes) + ")");
  }
}

std::string canonical_text(const ModelSpec& spec) {
  std::ostringstream os;
  os << spec.name << '|' << shape_string(spec.input_shape) << '|' << spec.classes << '\n';
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    os << l.name << ',' << to_string(l.kind) << ",[";
    for (int p : producers(l, i)) os << p << ';';
    os << "]," << l.in_channels << ',' << l.out_channels << ',' << l.kernel << ',' << l.stride << ','
       << l.padding << ',' << l.rank << ',' << (l.bias ? 1 : 0) << '\n';
  }
  return os.str();
}

std::uint64_t spec_hash(const ModelSpec& spec) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_text(spec)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string spec_to_json(const ModelSpec& spec) {
  nlohmann::ordered_json j;
  j["name"] = spec.name;
  j["input_shape"] = spec.input_shape;
  j["classes"] = spec.classes;
  j["layers"] = nlohmann::ordered_json::array();
  for (const LayerSpec& l : spec.layers) {
    nlohmann::ordered_json o;
    o["name"] = l.name;
    o["kind"] = std::string(to_string(l.kind));
    o["inputs"] = l.inputs;
    o["in"] = l.in_channels;
    o["out"] = l.out_channels;
    o["kernel"] = l.kernel;
    o["stride"] = l.stride;
    o["padding"] = l.padding;
    o["rank"] = l.rank;
    o["bias"] = l.bias;
    j["layers"].push_back(std::move(o));
  }
  return j.dump(2);
}

ModelSpec spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("model spec is not valid JSON: ") + e.what(), e.byte);
  }
  try {
    ModelSpec spec;
    spec.name = j.value("name", "custom");
    spec.input_shape = j.at("input_shape").get<Shape>();
    spec.classes = j.at("classes").get<std::size_t>();
    for (const auto& o : j.at("layers")) {
      LayerSpec l;
      l.name = o.at("name").get<std::string>();
      l.kind = layer_kind_from_string(o.at("kind").get<std::string>());
      l.inputs = o.value("inputs", std::vector<int>{});
      l.in_channels = o.value("in", std::size_t{0});
      l.out_channels = o.value("out", std::size_t{0});
      l.kernel = o.value("kernel", std::size_t{0});
      l.stride = o.value("stride", std::size_t{1});
      l.padding = o.value("padding", std::size_t{0});
      l.rank = o.value("rank", std::size_t{0});
      l.bias = o.value("bias", false);
      spec.layers.push_back(std::move(l));
    }
    validate(spec);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("model spec: ") + e.what());
  }
}

namespace {

class SpecBuilder {
 public:
  explicit SpecBuilder(ModelSpec& spec) : spec_(spec) {}

  int conv(std::string name, int input, std::size_t in, std::size_t out, std::size_t k,
           std::size_t stride, std::size_t pad) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = LayerKind::Conv2D;
    l.inputs = {input};
    l.in_channels = in;
    l.out_channels = out;
    l.kernel = k;
    l.stride = stride;
    l.padding = pad;
    return push(std::move(l));
  }
  int bn(std::string name, int input, std::size_t channels) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = LayerKind::BatchNorm;
    l.inputs = {input};
    l.out_channels = channels;
    return push(std::move(l));
  }
  int simple(std::string name, LayerKind kind, std::vector<int> inputs) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = kind;
    l.inputs = std::move(inputs);
    return push(std::move(l));
  }
  int dense(std::string name, int input, std::size_t in, std::size_t out) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = LayerKind::Dense;
    l.inputs = {input};
    l.in_channels = in;
    l.out_channels = out;
    l.bias = true;
    return push(std::move(l));
  }

 private:
  int push(LayerSpec l) {
    spec_.layers.push_back(std::move(l));
    return static_cast<int>(spec_.layers.size()) - 1;
  }
  ModelSpec& spec_;
};

}  // namespace

ModelSpec build_resnet_cifar(const std::array<std::size_t, 4>& blocks, std::size_t classes,
                             std::string name, std::size_t in_channels, std::size_t image_size) {
  if (classes < 2) throw ValueError("ResNet needs at least 2 classes");
  ModelSpec spec;
  spec.name = std::move(name);
  spec.input_shape = {in_channels, image_size, image_size};
  spec.classes = classes;
  SpecBuilder b(spec);

  constexpr std::array<std::size_t, 4> widths{64, 128, 256, 512};
  int x = b.conv("conv1", kNetworkInput, in_channels, widths[0], 3, 1, 1);
  x = b.bn("bn1", x, widths[0]);
  x = b.simple("relu1", LayerKind::ReLU, {x});
  std::size_t in = widths[0];
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t w = widths[s];
    for (std::size_t blk = 0; blk < blocks[s]; ++blk) {
      const std::size_t stride = (s > 0 && blk == 0) ? 2 : 1;
      const std::string p = "layer" + std::to_string(s + 1) + "." + std::to_string(blk) + ".";
      const int block_in = x;
      int y = b.conv(p + "conv1", block_in, in, w, 3, stride, 1);
      y = b.bn(p + "bn1", y, w);
      y = b.simple(p + "relu1", LayerKind::ReLU, {y});
      y = b.conv(p + "conv2", y, w, w, 3, 1, 1);
      y = b.bn(p + "bn2", y, w);
      int skip = block_in;
      if (stride != 1 || in != w) {
        skip = b.conv(p + "shortcut.conv", block_in, in, w, 1, stride, 0);
        skip = b.bn(p + "shortcut.bn", skip, w);
      }
      y = b.simple(p + "add", LayerKind::Add, {y, skip});
      x = b.simple(p + "relu2", LayerKind::ReLU, {y});
      in = w;
    }
  }
  x = b.simple("avgpool", LayerKind::AvgPool, {x});
  x = b.simple("flatten", LayerKind::Flatten, {x});
  b.dense("fc", x, in, classes);
  validate(spec);
  return spec;
}

ModelSpec build_resnet18_cifar(std::size_t classes) {
  return build_resnet_cifar({2, 2, 2, 2}, classes, "resnet18");
}

ModelSpec build_resnet34_cifar(std::size_t classes) {
  return build_resnet_cifar({3, 4, 6, 3}, classes, "resnet34");
}

ModelSpec build_tiny_cnn(std::size_t in_channels, std::size_t classes, std::size_t image_size,
                         std::array<std::size_t, 3> widths) {
  if (classes < 2) throw ValueError("tiny CNN needs at least 2 classes");
  ModelSpec spec;
  spec.name = "tiny_cnn";
  spec.input_shape = {in_channels, image_size, image_size};
  spec.classes = classes;
  SpecBuilder b(spec);
  int x = kNetworkInput;
  std::size_t in = in_channels;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string id = std::to_string(s + 1);
    const std::size_t stride = s == 2 ? 2 : 1;
    x = b.conv("conv" + id, x, in, widths[s], 3, stride, 1);
    x = b.bn("bn" + id, x, widths[s]);
    x = b.simple("relu" + id, LayerKind::ReLU, {x});
    in = widths[s];
  }
  x = b.simple("avgpool", LayerKind::AvgPool, {x});
  x = b.simple("flatten", LayerKind::Flatten, {x});
  b.dense("fc", x, in, classes);
  validate(spec);
  return spec;
}

std::vector<std::size_t> weighted_layers(const ModelSpec& spec) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    if (spec.layers[i].is_weighted()) out.push_back(i);
  return out;
}

std::size_t rho_for_stage(const ModelSpec& spec, std::size_t stage) {
  const auto weighted = weighted_layers(spec);
  const std::string prefix = "layer" + std::to_string(stage) + ".";
  for (std::size_t j = 0; j < weighted.size(); ++j)
    if (spec.layers[weighted[j]].name.starts_with(prefix)) return j;
  return weighted.size();
}

std::vector<std::size_t> resolve_ranks(const ModelSpec& spec, const HybridPlan& plan) {
  const auto weighted = weighted_layers(spec);
  if (plan.rho > weighted.size()) {
    throw ValueError("rho " + std::to_string(plan.rho) + " exceeds the " +
                     std::to_string(weighted.size()) + " weighted layers of `" + spec.name + "`");
  }
  if (!(plan.gamma > 0.0) || plan.gamma > 1.0) {
    throw ValueError("rank ratio must lie in (0, 1], got " + std::to_string(plan.gamma));
  }
  std::vector<std::size_t> ranks(weighted.size(), 0);
  for (std::size_t j = plan.rho; j < weighted.size(); ++j) {
    if (j == 0 && !plan.factorize_stem) continue;
    if (j + 1 == weighted.size() && !plan.factorize_classifier) continue;
    ranks[j] = layer_rank(spec.layers[weighted[j]].full_weight_shape(), plan.gamma);
  }
  return ranks;
}

ModelSpec unfactorized(const ModelSpec& spec) {
  ModelSpec out = spec;
  for (LayerSpec& l : out.layers) {
    if (l.kind == LayerKind::FactorizedDense) l.kind = LayerKind::Dense;
    if (l.kind == LayerKind::FactorizedConv) l.kind = LayerKind::Conv2D;
    l.rank = 0;
  }
  return out;
}

ModelSpec make_hybrid(const ModelSpec& spec, const HybridPlan& plan) {
  ModelSpec out = unfactorized(spec);
  const auto weighted = weighted_layers(out);
  const auto ranks = resolve_ranks(out, plan);
  for (std::size_t j = 0; j < weighted.size(); ++j) {
    if (ranks[j] == 0) continue;
    LayerSpec& l = out.layers[weighted[j]];
    l.kind = l.kind == LayerKind::Dense ? LayerKind::FactorizedDense : LayerKind::FactorizedConv;
    l.rank = ranks[j];
  }
  validate(out);
  return out;
}

ModelSpec width_slim(const ModelSpec& spec, double omega) {
  if (!(omega > 0.0) || omega > 1.0) {
    throw ValueError("width ratio must lie in (0, 1], got " + std::to_string(omega));
  }
  const auto slim = [omega](std::size_t w) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(omega * static_cast<double>(w) + 1e-9)));
  };
  ModelSpec out = spec;
  const auto weighted = weighted_layers(spec);
  const std::size_t classifier = weighted.empty() ? spec.layers.size() : weighted.back();
  std::vector<Shape> shapes;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    LayerSpec& l = out.layers[i];
    if (l.is_factorized()) throw ValueError("width_slim expects an unfactorized spec");
    const int p = producers(l, i)[0];
    const Shape& x = p == kNetworkInput ? out.input_shape : shapes[static_cast<std::size_t>(p)];
    switch (l.kind) {
      case LayerKind::Conv2D:
        l.in_channels = x.at(0);
        l.out_channels = slim(l.out_channels);
        break;
      case LayerKind::Dense:
        l.in_channels = shape_size(x);
        if (i != classifier) l.out_channels = slim(l.out_channels);
        break;
      case LayerKind::BatchNorm:
        l.out_channels = x.at(0);
        break;
      default:
        break;
    }
    // Shapes of the partially rewritten prefix; only entries < i are read.
    ModelSpec prefix{out.name, out.input_shape, out.classes,
                     std::vector<LayerSpec>(out.layers.begin(), out.layers.begin() + static_cast<long>(i) + 1)};
    shapes.push_back(infer_shapes(prefix).back());
  }
  if (omega != 1.0) out.name = spec.name + "@w" + std::to_string(omega).substr(0, 5);
  validate(out);
  return out;
}

}  // namespace fedhm
