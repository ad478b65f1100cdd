#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "fedhm/accounting.hpp"
#include "fedhm/errors.hpp"
#include "fedhm/factorize.hpp"
#include "fedhm/model.hpp"
#include "fedhm/network.hpp"
#include "fedhm/serialize.hpp"
#include "../support/oracles.hpp"

using namespace fedhm;
namespace ft = fedhm::testing;

namespace {

LayerSpec conv(std::size_t m, std::size_t n, std::size_t k, std::size_t rank = 0) {
  return LayerSpec{"c", rank ? LayerKind::FactorizedConv : LayerKind::Conv2D, {kNetworkInput}, m, n, k, 1, k / 2, rank};
}

LayerSpec dense(std::size_t m, std::size_t n, std::size_t rank = 0) {
  return LayerSpec{"d", rank ? LayerKind::FactorizedDense : LayerKind::Dense, {kNetworkInput}, m, n, 0, 1, 0, rank};
}

}  // namespace

TEST(Accounting, ClosedFormExamples) {
  EXPECT_EQ(count_params(dense(100, 50)), 5000u);
  EXPECT_EQ(count_params(dense(100, 50, 10)), 1500u);
  EXPECT_EQ(count_params(conv(64, 64, 3)), 36864u);
  EXPECT_EQ(count_params(conv(64, 64, 3, 16)), 6144u);
  EXPECT_EQ(layer_macs(conv(3, 16, 3), {16, 8, 8}), 27648u);
  EXPECT_EQ(layer_macs(conv(3, 16, 3, 4), {16, 8, 8}), 14592u);
  EXPECT_EQ(layer_macs(dense(256, 10), {10}), 2560u);
  // full-rank factorized FC is twice the dense size
  EXPECT_EQ(count_params(dense(8, 8, 8)), 2 * count_params(dense(8, 8)));
}

TEST(Accounting, BatchNormBuffersAreNotParameters) {
  const LayerSpec bn{"bn", LayerKind::BatchNorm, {kNetworkInput}, 0, 16};
  EXPECT_EQ(count_params(bn), 32u);
  const ModelSpec s{"bn_only", {16}, 16, {bn}};
  EXPECT_EQ(count_buffers(s), 32u);
}

TEST(Builders, ResNetParameterCounts) {
  EXPECT_EQ(count_params(build_resnet18_cifar(10)), 11173962u);
  const double r34 = static_cast<double>(count_params(build_resnet34_cifar(100)));
  EXPECT_NEAR(r34, 21.33e6, 0.005 * 21.33e6);
  const Model m = materialize(build_resnet18_cifar(10), 0);
  EXPECT_EQ(count_params(m), 11173962u);
}

TEST(Builders, ResNetShapesEndInClassifier) {
  const ModelSpec s = build_resnet18_cifar(10);
  const auto shapes = infer_shapes(s);
  EXPECT_EQ(shapes.back(), (Shape{10}));
  EXPECT_EQ(s.layers.front().name, "conv1");
  EXPECT_EQ(s.layers.back().name, "fc");
  EXPECT_EQ(weighted_layers(s).size(), 21u);  // 17 3x3 convs, 3 shortcut convs, fc
}

TEST(Builders, TinyCnnTrainsToSeparation) {
  const ModelSpec s = build_tiny_cnn(1, 2, 8);
  EXPECT_NO_THROW(validate(s));
  EXPECT_EQ(infer_shapes(s).back(), (Shape{2}));
}

TEST(Spec, ValidationErrors) {
  ModelSpec s = build_tiny_cnn(1, 3, 8);
  s.layers[1].out_channels = 5;  // bn width disagrees with conv
  EXPECT_THROW(validate(s), Error);
  s = build_tiny_cnn(1, 3, 8);
  s.layers[0].inputs = {3};  // forward reference
  EXPECT_THROW(validate(s), Error);
  s = build_tiny_cnn(1, 3, 8);
  s.classes = 4;
  EXPECT_THROW(validate(s), Error);
}

TEST(Spec, JsonRoundTripAndHash) {
  const ModelSpec s = make_hybrid(build_resnet_cifar({1, 1, 1, 1}, 5, "r", 3, 16), {2, 0.25});
  const ModelSpec back = spec_from_json(spec_to_json(s));
  EXPECT_EQ(back, s);
  EXPECT_EQ(spec_hash(back), spec_hash(s));
  EXPECT_NE(spec_hash(s), spec_hash(build_resnet_cifar({1, 1, 1, 1}, 5, "r", 3, 16)));
  EXPECT_THROW(spec_from_json("{\"name\": 3}"), Error);
}

TEST(Hybrid, RhoCutoffAndDefaults) {
  const ModelSpec base = build_resnet18_cifar(10);
  const std::size_t L = weighted_layers(base).size();
  EXPECT_EQ(make_hybrid(base, {L, 0.5}), base);  // rho = L leaves the model alone
  const ModelSpec h = make_hybrid(base, {0, 0.25});
  const auto w = weighted_layers(h);
  EXPECT_FALSE(h.layers[w.front()].is_factorized());  // stem kept
  EXPECT_FALSE(h.layers[w.back()].is_factorized());   // classifier kept
  for (std::size_t j = 1; j + 1 < w.size(); ++j) {
    const LayerSpec& l = h.layers[w[j]];
    EXPECT_TRUE(l.is_factorized());
    EXPECT_EQ(l.rank, layer_rank(l.full_weight_shape(), 0.25));
  }
  const ModelSpec h5 = make_hybrid(base, {5, 0.25});
  for (std::size_t j = 0; j < w.size(); ++j) EXPECT_EQ(h5.layers[w[j]].is_factorized(), j >= 5 && j + 1 < w.size());
  EXPECT_EQ(unfactorized(h), base);
  EXPECT_THROW(make_hybrid(base, {L + 1, 0.5}), ValueError);
}

TEST(Hybrid, FullRankRoundTripRecoversModel) {
  const ModelSpec base = build_tiny_cnn(2, 3, 6, {3, 4, 5});
  const Model m = materialize(base, 3);
  const Model f = factorize_model(m, {0, 1.0, true, true});
  for (const auto& l : f.spec.layers)
    if (l.is_weighted()) {
      EXPECT_TRUE(l.is_factorized());
    }
  const Model back = recover_model(f);
  ASSERT_EQ(back.spec, base);
  for (std::size_t i = 0; i < base.layers.size(); ++i)
    for (const auto& [name, t] : m.params[i]) EXPECT_LE(relative_error(back.params[i].at(name), t), 1e-8) << name;
}

TEST(Hybrid, FactorizedForwardMatchesRecoveredForward) {
  std::mt19937_64 rng(4);
  const Model m = materialize(build_resnet_cifar({1, 1, 0, 0}, 3, "mini", 2, 6), 5);
  const Model f = factorize_model(m, {1, 0.5});
  const Tensor x = ft::random_tensor({3, 2, 6, 6}, rng);
  EXPECT_LE(relative_error(forward_eval(f, x), forward_eval(recover_model(f), x)), 1e-10);
}

TEST(Materialize, SeedDeterminismAndShapes) {
  const ModelSpec s = make_hybrid(build_tiny_cnn(1, 4, 8), {0, 0.5});
  EXPECT_EQ(materialize(s, 7), materialize(s, 7));
  EXPECT_NE(materialize(s, 7), materialize(s, 8));
  const Model m = materialize(s, 7);
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    const auto shapes = parameter_shapes(s.layers[i]);
    ASSERT_EQ(shapes.size(), m.params[i].size());
    for (const auto& [name, shape] : shapes) EXPECT_EQ(m.params[i].at(name).shape(), shape);
  }
  EXPECT_FALSE(is_trainable("running_mean"));
  EXPECT_TRUE(is_trainable("gamma"));
}

TEST(WidthSlim, SlimsHiddenWidthsOnly) {
  const ModelSpec full = build_resnet18_cifar(10);
  EXPECT_EQ(width_slim(full, 1.0), full);
  const ModelSpec half = width_slim(full, 0.5);
  EXPECT_EQ(half.layers.front().in_channels, 3u);
  EXPECT_EQ(half.layers.back().out_channels, 10u);
  const LayerSpec& c = half.layers[3];  // layer1.0.conv1
  EXPECT_EQ(c.full_weight_shape(), (Shape{32, 32, 3, 3}));
  EXPECT_EQ(count_params(c), 9216u);
  // every hidden width halves, so conv parameters shrink ~4x
  EXPECT_EQ(count_params(half), 2797610u);
  EXPECT_THROW(width_slim(full, 0.0), ValueError);
  EXPECT_THROW(width_slim(make_hybrid(full, {0, 0.5}), 0.5), Error);
}

TEST(WidthSlim, NestingProperty) {
  const ModelSpec full = build_tiny_cnn(1, 4, 8);
  const Model big = materialize(width_slim(full, 0.75), 1);
  const ModelSpec small = width_slim(full, 0.5);
  const Model sliced = slice_model(big, small);
  EXPECT_EQ(sliced.spec, small);
  for (std::size_t i = 0; i < small.layers.size(); ++i)
    for (const auto& [name, t] : sliced.params[i]) {
      const Tensor& b = big.params[i].at(name);
      if (t.rank() == 4) {
        for (std::size_t a = 0; a < t.dim(0); ++a)
          for (std::size_t c = 0; c < t.dim(1); ++c) EXPECT_EQ(t.at(a, c, 0, 0), b.at(a, c, 0, 0));
      } else if (t.rank() == 1) {
        for (std::size_t a = 0; a < t.size(); ++a) EXPECT_EQ(t[a], b[a]);
      }
    }
  EXPECT_THROW(slice_model(materialize(small, 1), width_slim(full, 0.75)), Error);
}

TEST(Serialize, RoundTripAndFormatErrors) {
  const ModelSpec s = make_hybrid(build_tiny_cnn(1, 4, 8), {0, 0.5});
  const Model m = materialize(s, 11);
  auto bytes = encode_weights(m);
  EXPECT_EQ(decode_weights(bytes, s), m);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 6), "FEDHM1");

  auto bad = bytes;
  bad[0] = 'X';
  try {
    decode_weights(bad, s);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  bad = bytes;
  bad.resize(bytes.size() - 3);
  EXPECT_THROW(decode_weights(bad, s), FormatError);
  EXPECT_THROW(decode_weights(bytes, build_tiny_cnn(1, 4, 8)), FormatError);  // spec hash differs

  const auto path = std::filesystem::temp_directory_path() / "fedhm_weights_test.bin";
  save_weights(m, path);
  EXPECT_EQ(load_weights(path, s), m);
  std::filesystem::remove(path);
}
