#pragma once

#include <cstddef>
#include <span>

#include "fedhm/tensor.hpp"

/// Stateless forward/backward kernels for the supported layer kinds.
///
/// Layout is (batch, channel, height, width) for images and (batch, features)
/// for vectors. Dense weights are stored (in, out); conv weights (out, in, kh, kw).
namespace fedhm::nn {

struct ConvGeometry {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  static ConvGeometry square(std::size_t stride, std::size_t pad) {
    return {stride, stride, pad, pad};
  }
};

/// floor((in + 2 pad - kernel) / stride) + 1; throws DimensionError when non-positive.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad);

// Dense ---------------------------------------------------------------------

/// out = x W + b. `b` may be an empty tensor (no bias).
Tensor dense_forward(const Tensor& x, const Tensor& W, const Tensor& b);

struct DenseGrads {
  Tensor dx;
  Tensor dW;
  Tensor db;  // empty when the layer has no bias
};
DenseGrads dense_backward(const Tensor& x, const Tensor& W, bool has_bias, const Tensor& grad_out);

/// out = (x U) V^T + b, never forming U V^T.
Tensor factorized_dense_forward(const Tensor& x, const Tensor& U, const Tensor& V,
                                const Tensor& b = {});

struct FactorizedDenseGrads {
  Tensor dx;
  Tensor dU;
  Tensor dV;
  Tensor db;
};
FactorizedDenseGrads factorized_dense_backward(const Tensor& x, const Tensor& U, const Tensor& V,
                                               bool has_bias, const Tensor& grad_out);

// Convolution -----------------------------------------------------------------

/// Cross-correlation of x (N, m, H, W) with W (n, m, kh, kw). No bias.
Tensor conv2d_forward(const Tensor& x, const Tensor& W, const ConvGeometry& geom);

struct ConvGrads {
  Tensor dx;
  Tensor dW;
};
ConvGrads conv2d_backward(const Tensor& x, const Tensor& W, const ConvGeometry& geom,
                          const Tensor& grad_out);

/// Separable pair: U (r, m, k, 1) with stride (s, 1) / pad (p, 0), then
/// V (n, r, 1, k) with stride (1, s) / pad (0, p). When `hidden` is non-null the
/// intermediate activation is stored there for the backward pass.
Tensor factorized_conv_forward(const Tensor& x, const Tensor& U, const Tensor& V,
                               std::size_t stride, std::size_t pad, Tensor* hidden = nullptr);

struct FactorizedConvGrads {
  Tensor dx;
  Tensor dU;
  Tensor dV;
};
FactorizedConvGrads factorized_conv_backward(const Tensor& x, const Tensor& hidden,
                                             const Tensor& U, const Tensor& V, std::size_t stride,
                                             std::size_t pad, const Tensor& grad_out);

// Batch normalization -------------------------------------------------------

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct BatchNormCache {
  Tensor x_hat;
  std::vector<double> inv_std;
};

/// Normalizes with batch statistics and updates the running estimates in place.
/// Accepts (N, C) or (N, C, H, W).
Tensor batchnorm_forward_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                               Tensor& running_mean, Tensor& running_var,
                               BatchNormCache* cache = nullptr);

Tensor batchnorm_forward_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              const Tensor& running_mean, const Tensor& running_var);

struct BatchNormGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
};
BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma,
                                  const Tensor& grad_out);

// Parameter-free layers -------------------------------------------------------

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

/// (N, C, H, W) -> (N, C, 1, 1)
Tensor global_avg_pool_forward(const Tensor& x);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_out);

/// (N, ...) -> (N, prod(...))
Tensor flatten_forward(const Tensor& x);

// Loss ----------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits
};

/// Mean negative log-softmax of the true class; grad = (softmax - onehot) / batch.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace fedhm::nn
