#include <gtest/gtest.h>

#include <random>

#include "fedhm/errors.hpp"
#include "fedhm/layers.hpp"
#include "fedhm/network.hpp"
#include "fedhm/sgd.hpp"
#include "fedhm/tensor.hpp"
#include "../support/oracles.hpp"

using namespace fedhm;
namespace ft = fedhm::testing;

TEST(Tensor, ShapeAndSizeAgree) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), DimensionError);
  EXPECT_THROW(t.reshaped({5, 5}), DimensionError);
  EXPECT_EQ(t.reshaped({6, 4}).shape(), (Shape{6, 4}));
}

TEST(Tensor, CheckFiniteRejectsNanAndInf) {
  Tensor t({2}, 1.0);
  EXPECT_NO_THROW(t.check_finite("t"));
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(t.check_finite("t"), StateError);
  t[1] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, MatmulMatchesTripleLoop) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t m = 1 + rng() % 7, k = 1 + rng() % 7, n = 1 + rng() % 7;
    const Tensor a = ft::random_tensor({m, k}, rng), b = ft::random_tensor({k, n}, rng);
    const Tensor ref = ft::naive_matmul(a, b);
    EXPECT_LE(max_abs_diff(matmul(a, b), ref), 1e-12);
    EXPECT_LE(max_abs_diff(matmul_nt(a, transpose(b)), ref), 1e-12);
    EXPECT_LE(max_abs_diff(matmul_tn(transpose(a), b), ref), 1e-12);
  }
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST(Dense, IdentityAndBasisRows) {
  const Tensor x = Tensor::matrix({{1, 2}});
  EXPECT_EQ(nn::dense_forward(x, identity(2), Tensor({2})), x);
  const Tensor W = Tensor::matrix({{3, 4}, {5, 6}});
  EXPECT_EQ(nn::dense_forward(identity(2), W, Tensor({2})), W);
  EXPECT_THROW(nn::dense_forward(x, Tensor({3, 2}), Tensor()), DimensionError);
}

TEST(Dense, RandomAgainstOracle) {
  std::mt19937_64 rng(2);
  const Tensor x = ft::random_tensor({4, 3}, rng), W = ft::random_tensor({3, 5}, rng), b = ft::random_tensor({5}, rng);
  Tensor ref = ft::naive_matmul(x, W);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) ref.at(i, j) += b[j];
  EXPECT_LE(max_abs_diff(nn::dense_forward(x, W, b), ref), 1e-12);
}

TEST(FactorizedDense, EqualsDenseWithProductWeight) {
  std::mt19937_64 rng(3);
  const Tensor x = ft::random_tensor({4, 6}, rng), U = ft::random_tensor({6, 2}, rng), V = ft::random_tensor({5, 2}, rng);
  EXPECT_LE(max_abs_diff(nn::factorized_dense_forward(x, U, V), nn::dense_forward(x, matmul_nt(U, V), Tensor())),
            1e-12);
  EXPECT_THROW(nn::factorized_dense_forward(x, U, Tensor({5, 3})), DimensionError);
}

TEST(Conv2D, AgainstSixLoopOracle) {
  std::mt19937_64 rng(4);
  for (std::size_t k : {1, 3, 5})
    for (std::size_t s : {1, 2, 3})
      for (std::size_t p : {0, 1, 2}) {
        const Tensor x = ft::random_tensor({2, 3, 7, 9}, rng), W = ft::random_tensor({4, 3, k, k}, rng);
        EXPECT_LE(max_abs_diff(nn::conv2d_forward(x, W, nn::ConvGeometry::square(s, p)), ft::naive_conv(x, W, s, s, p, p)),
                  1e-12)
            << "k=" << k << " s=" << s << " p=" << p;
      }
}

TEST(Conv2D, OutputExtentAndErrors) {
  EXPECT_EQ(nn::conv_output_extent(32, 3, 1, 1), 32u);
  EXPECT_EQ(nn::conv_output_extent(32, 3, 2, 1), 16u);
  EXPECT_THROW(nn::conv_output_extent(2, 5, 1, 0), DimensionError);
  EXPECT_THROW(nn::conv2d_forward(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), {}), DimensionError);
}

TEST(FactorizedConv, MatchesRecoveredKernelAcrossGeometries) {
  std::mt19937_64 rng(5);
  for (std::size_t k : {1, 3, 5})
    for (std::size_t s : {1, 2})
      for (std::size_t p : {0, 1}) {
        const Tensor x = ft::random_tensor({2, 3, k + 4, k + 2}, rng);
        const Tensor U = ft::random_tensor({2, 3, k, 1}, rng), V = ft::random_tensor({4, 2, 1, k}, rng);
        // W[o, i, ky, kx] = sum_r U[r, i, ky, 0] V[o, r, 0, kx]
        Tensor W({4, 3, k, k});
        for (std::size_t o = 0; o < 4; ++o)
          for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t b = 0; b < k; ++b)
                for (std::size_t r = 0; r < 2; ++r) W.at(o, i, a, b) += U.at(r, i, a, 0) * V.at(o, r, 0, b);
        EXPECT_LE(relative_error(nn::factorized_conv_forward(x, U, V, s, p), ft::naive_conv(x, W, s, s, p, p)), 1e-12);
      }
}

TEST(BatchNorm, TrainNormalizesAndUpdatesRunningStats) {
  const Tensor x = Tensor::matrix({{1, 10}, {3, 20}, {5, 30}, {7, 40}});
  Tensor rm({2}), rv({2}, 1.0);
  const Tensor y = nn::batchnorm_forward_train(x, Tensor({2}, 1.0), Tensor({2}), rm, rv);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < 4; ++i) mean += y.at(i, c) / 4;
    for (std::size_t i = 0; i < 4; ++i) var += (y.at(i, c) - mean) * (y.at(i, c) - mean) / 4;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
  // running = 0.9 * old + 0.1 * batch (unbiased variance)
  EXPECT_NEAR(rm[0], 0.1 * 4.0, 1e-12);
  EXPECT_NEAR(rv[0], 0.9 + 0.1 * (20.0 / 3.0), 1e-12);
}

TEST(BatchNorm, EvalUsesRunningStatsAndBackwardNeedsCache) {
  const Tensor x = Tensor::matrix({{2.0}});
  const Tensor y = nn::batchnorm_forward_eval(x, Tensor({1}, 3.0), Tensor({1}, 1.0), Tensor({1}, 1.0), Tensor({1}, 4.0));
  EXPECT_NEAR(y[0], 3.0 * (1.0 / std::sqrt(4.0 + nn::kBatchNormEps)) + 1.0, 1e-12);
  EXPECT_THROW(nn::batchnorm_backward({}, Tensor({1}), Tensor({1, 1})), StateError);
}

TEST(Loss, SoftmaxCrossEntropyValues) {
  const Tensor logits = Tensor::matrix({{0, 0}, {0, 0}});
  const std::vector<int> labels{0, 1};
  const auto r = nn::softmax_cross_entropy(logits, labels);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-12);
  EXPECT_NEAR(r.grad.at(0, 0), -0.25, 1e-12);
  const std::vector<int> bad{0, 2};
  EXPECT_THROW(nn::softmax_cross_entropy(logits, bad), ValueError);
}

// Finite-difference property over random shapes: every layer kind.
class LayerGradient : public ::testing::TestWithParam<int> {};

TEST_P(LayerGradient, CentralDifferencesAgree) {
  std::mt19937_64 rng(100 + GetParam());
  const std::size_t m = 1 + rng() % 4, n = 1 + rng() % 4, k = 1 + 2 * (rng() % 2), s = 1 + rng() % 2, p = rng() % 2;
  const std::size_t r = 1 + rng() % (std::min(m, n) * k);
  Tensor x = ft::random_tensor({2, m, k + 3, k + 2}, rng);
  {
    Tensor W = ft::random_tensor({n, m, k, k}, rng);
    const auto geom = nn::ConvGeometry::square(s, p);
    const Tensor probe = ft::random_tensor(nn::conv2d_forward(x, W, geom).shape(), rng);
    const auto g = nn::conv2d_backward(x, W, geom, probe);
    const auto f = [&] { return ft::probe(probe, nn::conv2d_forward(x, W, geom)); };
    EXPECT_LE(ft::gradient_error(g.dx, ft::numeric_gradient(x, f)), 1e-4);
    EXPECT_LE(ft::gradient_error(g.dW, ft::numeric_gradient(W, f)), 1e-4);
  }
  {
    Tensor U = ft::random_tensor({r, m, k, 1}, rng), V = ft::random_tensor({n, r, 1, k}, rng), hidden;
    const Tensor y = nn::factorized_conv_forward(x, U, V, s, p, &hidden);
    const Tensor probe = ft::random_tensor(y.shape(), rng);
    const auto g = nn::factorized_conv_backward(x, hidden, U, V, s, p, probe);
    const auto f = [&] { return ft::probe(probe, nn::factorized_conv_forward(x, U, V, s, p)); };
    EXPECT_LE(ft::gradient_error(g.dx, ft::numeric_gradient(x, f)), 1e-4);
    EXPECT_LE(ft::gradient_error(g.dU, ft::numeric_gradient(U, f)), 1e-4);
    EXPECT_LE(ft::gradient_error(g.dV, ft::numeric_gradient(V, f)), 1e-4);
  }
  {
    Tensor xd = ft::random_tensor({3, m}, rng), U = ft::random_tensor({m, std::min(m, n)}, rng),
           V = ft::random_tensor({n, std::min(m, n)}, rng), b = ft::random_tensor({n}, rng);
    const Tensor probe = ft::random_tensor({3, n}, rng);
    const auto g = nn::factorized_dense_backward(xd, U, V, true, probe);
    const auto f = [&] { return ft::probe(probe, nn::factorized_dense_forward(xd, U, V, b)); };
    EXPECT_LE(ft::gradient_error(g.dx, ft::numeric_gradient(xd, f)), 1e-4);
    EXPECT_LE(ft::gradient_error(g.dU, ft::numeric_gradient(U, f)), 1e-4);
    EXPECT_LE(ft::gradient_error(g.dV, ft::numeric_gradient(V, f)), 1e-4);
    EXPECT_LE(ft::gradient_error(g.db, ft::numeric_gradient(b, f)), 1e-4);
  }
  {
    Tensor gamma = ft::random_tensor({m}, rng), beta = ft::random_tensor({m}, rng);
    const Tensor probe = ft::random_tensor(x.shape(), rng);
    const auto f = [&] {
      Tensor rm({m}), rv({m}, 1.0);
      return ft::probe(probe, nn::batchnorm_forward_train(x, gamma, beta, rm, rv));
    };
    Tensor rm({m}), rv({m}, 1.0);
    nn::BatchNormCache cache;
    nn::batchnorm_forward_train(x, gamma, beta, rm, rv, &cache);
    const auto g = nn::batchnorm_backward(cache, gamma, probe);
    EXPECT_LE(ft::gradient_error(g.dx, ft::numeric_gradient(x, f)), 1e-4);
    EXPECT_LE(ft::gradient_error(g.dgamma, ft::numeric_gradient(gamma, f)), 1e-4);
    EXPECT_LE(ft::gradient_error(g.dbeta, ft::numeric_gradient(beta, f)), 1e-4);
  }
}

INSTANTIATE_TEST_SUITE_P(RandomShapes, LayerGradient, ::testing::Range(0, 12));

Model two_layer_model() {
  ModelSpec s{"mlp", {3}, 2,
              {LayerSpec{"fc1", LayerKind::Dense, {kNetworkInput}, 3, 4, 0, 1, 0, 0, true},
               LayerSpec{"relu", LayerKind::ReLU, {0}},
               LayerSpec{"fc2", LayerKind::FactorizedDense, {1}, 4, 2, 0, 1, 0, 2, true}}};
  return materialize(s, 9);
}

TEST(Sgd, ZeroLearningRateLeavesParametersUnchanged) {
  Model m = two_layer_model();
  const Model before = m;
  Trace tr;
  const Tensor x = Tensor::matrix({{1, 2, 3}, {0, -1, 2}});
  const std::vector<int> y{0, 1};
  const auto loss = nn::softmax_cross_entropy(forward_train(m, x, tr), y);
  SgdState st{SgdConfig{0.0, 0.9, 1e-4, 1e-4}, {}};
  sgd_step(m, backward(m, tr, loss.grad).params, st);
  EXPECT_EQ(m, before);
}

TEST(Sgd, SingleStepEqualsHandComputedUpdate) {
  Model m = two_layer_model();
  const Model before = m;
  Trace tr;
  const Tensor x = Tensor::matrix({{1, 2, 3}, {0, -1, 2}});
  const std::vector<int> y{0, 1};
  const auto grads = backward(m, tr, nn::softmax_cross_entropy(forward_train(m, x, tr), y).grad).params;
  const double lr = 0.05, wd = 0.01, fd = 0.02;
  SgdState st{SgdConfig{lr, 0.0, wd, fd}, {}};
  sgd_step(m, grads, st);

  const Tensor& W = before.params[0].at("W");
  const Tensor expect_W = W - lr * (grads[0].at("W") + wd * W);
  EXPECT_LE(max_abs_diff(m.params[0].at("W"), expect_W), 1e-15);
  const Tensor& b = before.params[0].at("b");
  EXPECT_LE(max_abs_diff(m.params[0].at("b"), b - lr * grads[0].at("b")), 1e-15);  // no decay on biases
  const Tensor& U = before.params[2].at("U");
  const Tensor& V = before.params[2].at("V");
  const Tensor dU = fd * matmul(U, matmul_tn(V, V));
  EXPECT_LE(max_abs_diff(m.params[2].at("U"), U - lr * (grads[2].at("U") + dU)), 1e-15);
}

TEST(Sgd, MomentumAccumulates) {
  Model m = two_layer_model();
  std::vector<ParamMap> g = zeros_like(m);
  g[0].at("b").fill(1.0);
  SgdState st{SgdConfig{0.1, 0.5, 0.0, 0.0}, {}};
  const double b0 = m.params[0].at("b")[0];
  sgd_step(m, g, st);
  sgd_step(m, g, st);
  // v1 = 1, v2 = 1.5; total step 0.1 * 2.5
  EXPECT_NEAR(m.params[0].at("b")[0], b0 - 0.25, 1e-15);
}

TEST(Sgd, ConfigValidation) {
  EXPECT_THROW((SgdConfig{-0.1, 0.9, 0, 0}).validate(), ValueError);
  EXPECT_THROW((SgdConfig{0.1, 1.0, 0, 0}).validate(), ValueError);
  EXPECT_NO_THROW((SgdConfig{0.0, 0.0, 0, 0}).validate());
}

TEST(Network, BackwardRequiresTrace) {
  const Model m = two_layer_model();
  EXPECT_THROW(backward(m, Trace{}, Tensor({1, 2})), StateError);
}

TEST(Network, EvalDoesNotTouchRunningStats) {
  Model m = materialize(build_tiny_cnn(1, 3, 6, {2, 3, 4}), 1);
  const Model before = m;
  std::mt19937_64 rng(1);
  forward_eval(m, ft::random_tensor({2, 1, 6, 6}, rng));
  EXPECT_EQ(m, before);
  Trace tr;
  forward_train(m, ft::random_tensor({2, 1, 6, 6}, rng), tr);
  EXPECT_NE(m, before);
}
