#include "fedhm/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedhm/errors.hpp"

namespace fedhm::nn {

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad) {
  if (stride == 0) throw DimensionError("conv stride must be positive");
  if (in + 2 * pad < kernel) {
    throw DimensionError("conv output extent is non-positive: input " + std::to_string(in) +
                         ", kernel " + std::to_string(kernel) + ", pad " + std::to_string(pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_string(t.shape()));
  }
}

void add_bias_rows(Tensor& out, const Tensor& b) {
  if (b.empty()) return;
  const std::size_t n = out.dim(1);
  if (b.size() != n) {
    throw DimensionError("bias length " + std::to_string(b.size()) + " != " + std::to_string(n));
  }
  for (std::size_t i = 0; i < out.dim(0); ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += b[j];
}

Tensor column_sums(const Tensor& g) {
  Tensor out({g.dim(1)});
  for (std::size_t i = 0; i < g.dim(0); ++i)
    for (std::size_t j = 0; j < g.dim(1); ++j) out[j] += g.at(i, j);
  return out;
}

// Range of output positions whose input coordinate pos*stride + offset - pad lies in [0, in).
struct ValidRange {
  std::size_t begin;
  std::size_t end;
};

ValidRange valid_outputs(std::size_t out, std::size_t in, std::size_t stride, std::size_t offset,
                         std::size_t pad) {
  // need pos*stride + offset >= pad  and  pos*stride + offset - pad < in
  std::size_t begin = 0;
  if (offset < pad) begin = (pad - offset + stride - 1) / stride;
  std::size_t end = 0;
  if (in + pad > offset) end = std::min(out, (in + pad - offset - 1) / stride + 1);
  if (begin > end) begin = end;
  return {begin, end};
}

struct ConvDims {
  std::size_t batch, in_ch, in_h, in_w, out_ch, kh, kw, out_h, out_w;
};

ConvDims conv_dims(const Tensor& x, const Tensor& W, const ConvGeometry& g) {
  require_rank(x, 4, "conv2d input");
  require_rank(W, 4, "conv2d weight");
  if (W.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d: weight " + shape_string(W.shape()) + " expects " +
                         std::to_string(W.dim(1)) + " input channels, input has shape " +
                         shape_string(x.shape()));
  }
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), W.dim(0), W.dim(2), W.dim(3), 0, 0};
  d.out_h = conv_output_extent(d.in_h, d.kh, g.stride_h, g.pad_h);
  d.out_w = conv_output_extent(d.in_w, d.kw, g.stride_w, g.pad_w);
  return d;
}

}  // namespace

Tensor dense_forward(const Tensor& x, const Tensor& W, const Tensor& b) {
  require_rank(x, 2, "dense input");
  require_rank(W, 2, "dense weight");
  Tensor out = matmul(x, W);
  add_bias_rows(out, b);
  return out;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& W, bool has_bias,
                          const Tensor& grad_out) {
  DenseGrads g;
  g.dW = matmul_tn(x, grad_out);
  g.dx = matmul_nt(grad_out, W);
  if (has_bias) g.db = column_sums(grad_out);
  return g;
}

Tensor factorized_dense_forward(const Tensor& x, const Tensor& U, const Tensor& V,
                                const Tensor& b) {
  require_rank(x, 2, "factorized dense input");
  require_rank(U, 2, "factorized dense U");
  require_rank(V, 2, "factorized dense V");
  if (U.dim(1) != V.dim(1)) {
    throw DimensionError("factorized dense: U " + shape_string(U.shape()) + " and V " +
                         shape_string(V.shape()) + " disagree on rank");
  }
  if (U.dim(1) > std::min(U.dim(0), V.dim(0))) {
    throw DimensionError("factorized dense: rank exceeds min(m, n)");
  }
  Tensor out = matmul_nt(matmul(x, U), V);
  add_bias_rows(out, b);
  return out;
}

FactorizedDenseGrads factorized_dense_backward(const Tensor& x, const Tensor& U, const Tensor& V,
                                               bool has_bias, const Tensor& grad_out) {
  FactorizedDenseGrads g;
  const Tensor xu = matmul(x, U);          // (B, r)
  const Tensor g_xu = matmul(grad_out, V);  // (B, r)
  g.dV = matmul_tn(grad_out, xu);           // (n, r)
  g.dU = matmul_tn(x, g_xu);                // (m, r)
  g.dx = matmul_nt(g_xu, U);                // (B, m)
  if (has_bias) g.db = column_sums(grad_out);
  return g;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& W, const ConvGeometry& geom) {
  const ConvDims d = conv_dims(x, W, geom);
  Tensor out({d.batch, d.out_ch, d.out_h, d.out_w});
  const double* xd = x.data().data();
  const double* wd = W.data().data();
  double* od = out.data().data();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.out_ch; ++o) {
      double* oplane = od + ((b * d.out_ch + o) * d.out_h) * d.out_w;
      for (std::size_t i = 0; i < d.in_ch; ++i) {
        const double* xplane = xd + ((b * d.in_ch + i) * d.in_h) * d.in_w;
        for (std::size_t ky = 0; ky < d.kh; ++ky) {
          const ValidRange ry = valid_outputs(d.out_h, d.in_h, geom.stride_h, ky, geom.pad_h);
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const double w = wd[((o * d.in_ch + i) * d.kh + ky) * d.kw + kx];
            if (w == 0.0) continue;
            const ValidRange rx = valid_outputs(d.out_w, d.in_w, geom.stride_w, kx, geom.pad_w);
            for (std::size_t y = ry.begin; y < ry.end; ++y) {
              const double* xrow = xplane + (y * geom.stride_h + ky - geom.pad_h) * d.in_w;
              double* orow = oplane + y * d.out_w;
              for (std::size_t xo = rx.begin; xo < rx.end; ++xo) {
                orow[xo] += w * xrow[xo * geom.stride_w + kx - geom.pad_w];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& W, const ConvGeometry& geom,
                          const Tensor& grad_out) {
  const ConvDims d = conv_dims(x, W, geom);
  if (grad_out.shape() != Shape{d.batch, d.out_ch, d.out_h, d.out_w}) {
    throw DimensionError("conv2d backward: upstream gradient shape " +
                         shape_string(grad_out.shape()));
  }
  ConvGrads g{Tensor(x.shape()), Tensor(W.shape())};
  const double* xd = x.data().data();
  const double* wd = W.data().data();
  const double* gd = grad_out.data().data();
  double* dxd = g.dx.data().data();
  double* dwd = g.dW.data().data();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.out_ch; ++o) {
      const double* gplane = gd + ((b * d.out_ch + o) * d.out_h) * d.out_w;
      for (std::size_t i = 0; i < d.in_ch; ++i) {
        const double* xplane = xd + ((b * d.in_ch + i) * d.in_h) * d.in_w;
        double* dxplane = dxd + ((b * d.in_ch + i) * d.in_h) * d.in_w;
        for (std::size_t ky = 0; ky < d.kh; ++ky) {
          const ValidRange ry = valid_outputs(d.out_h, d.in_h, geom.stride_h, ky, geom.pad_h);
          for (std::size_t kx = 0; kx < d.kw; ++kx) {
            const std::size_t widx = ((o * d.in_ch + i) * d.kh + ky) * d.kw + kx;
            const double w = wd[widx];
            const ValidRange rx = valid_outputs(d.out_w, d.in_w, geom.stride_w, kx, geom.pad_w);
            double acc = 0.0;
            for (std::size_t y = ry.begin; y < ry.end; ++y) {
              const std::size_t row = (y * geom.stride_h + ky - geom.pad_h) * d.in_w;
              const double* xrow = xplane + row;
              double* dxrow = dxplane + row;
              const double* grow = gplane + y * d.out_w;
              for (std::size_t xo = rx.begin; xo < rx.end; ++xo) {
                const std::size_t col = xo * geom.stride_w + kx - geom.pad_w;
                acc += grow[xo] * xrow[col];
                dxrow[col] += w * grow[xo];
              }
            }
            dwd[widx] += acc;
          }
        }
      }
    }
  }
  return g;
}

namespace {

void check_factorized_conv(const Tensor& U, const Tensor& V) {
  require_rank(U, 4, "factorized conv U");
  require_rank(V, 4, "factorized conv V");
  if (U.dim(3) != 1 || V.dim(2) != 1 || V.dim(1) != U.dim(0) || U.dim(2) != V.dim(3)) {
    throw DimensionError("factorized conv: incompatible U " + shape_string(U.shape()) +
                         " and V " + shape_string(V.shape()));
  }
}

}  // namespace

Tensor factorized_conv_forward(const Tensor& x, const Tensor& U, const Tensor& V,
                               std::size_t stride, std::size_t pad, Tensor* hidden) {
  check_factorized_conv(U, V);
  Tensor h = conv2d_forward(x, U, ConvGeometry{stride, 1, pad, 0});
  Tensor out = conv2d_forward(h, V, ConvGeometry{1, stride, 0, pad});
  if (hidden) *hidden = std::move(h);
  return out;
}

FactorizedConvGrads factorized_conv_backward(const Tensor& x, const Tensor& hidden,
                                             const Tensor& U, const Tensor& V, std::size_t stride,
                                             std::size_t pad, const Tensor& grad_out) {
  check_factorized_conv(U, V);
  ConvGrads gv = conv2d_backward(hidden, V, ConvGeometry{1, stride, 0, pad}, grad_out);
  ConvGrads gu = conv2d_backward(x, U, ConvGeometry{stride, 1, pad, 0}, gv.dx);
  return {std::move(gu.dx), std::move(gu.dW), std::move(gv.dW)};
}

namespace {

struct BnDims {
  std::size_t batch, channels, spatial;
};

BnDims bn_dims(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  if (x.rank() != 2 && x.rank() != 4) {
    throw DimensionError("batchnorm expects (N, C) or (N, C, H, W), got " +
                         shape_string(x.shape()));
  }
  if (x.dim(0) == 0) throw DimensionError("batchnorm: batch size 0");
  const std::size_t c = x.dim(1);
  if (gamma.size() != c || beta.size() != c) {
    throw DimensionError("batchnorm: " + std::to_string(c) + " channels but gamma/beta of length " +
                         std::to_string(gamma.size()) + "/" + std::to_string(beta.size()));
  }
  const std::size_t spatial = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  return {x.dim(0), c, spatial};
}

}  // namespace

Tensor batchnorm_forward_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                               Tensor& running_mean, Tensor& running_var,
                               BatchNormCache* cache) {
  const BnDims d = bn_dims(x, gamma, beta);
  const double count = static_cast<double>(d.batch * d.spatial);
  Tensor out(x.shape());
  Tensor x_hat(x.shape());
  std::vector<double> inv_std(d.channels);
  for (std::size_t c = 0; c < d.channels; ++c) {
    double mean = 0.0;
    for (std::size_t b = 0; b < d.batch; ++b) {
      const double* p = &x.data()[(b * d.channels + c) * d.spatial];
      for (std::size_t s = 0; s < d.spatial; ++s) mean += p[s];
    }
    mean /= count;
    double var = 0.0;
    for (std::size_t b = 0; b < d.batch; ++b) {
      const double* p = &x.data()[(b * d.channels + c) * d.spatial];
      for (std::size_t s = 0; s < d.spatial; ++s) var += (p[s] - mean) * (p[s] - mean);
    }
    var /= count;
    const double istd = 1.0 / std::sqrt(var + kBatchNormEps);
    inv_std[c] = istd;
    for (std::size_t b = 0; b < d.batch; ++b) {
      const std::size_t base = (b * d.channels + c) * d.spatial;
      for (std::size_t s = 0; s < d.spatial; ++s) {
        const double xh = (x[base + s] - mean) * istd;
        x_hat[base + s] = xh;
        out[base + s] = gamma[c] * xh + beta[c];
      }
    }
    const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
    running_mean[c] = (1.0 - kBatchNormMomentum) * running_mean[c] + kBatchNormMomentum * mean;
    running_var[c] = (1.0 - kBatchNormMomentum) * running_var[c] + kBatchNormMomentum * unbiased;
  }
  if (cache) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

Tensor batchnorm_forward_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              const Tensor& running_mean, const Tensor& running_var) {
  const BnDims d = bn_dims(x, gamma, beta);
  Tensor out(x.shape());
  for (std::size_t c = 0; c < d.channels; ++c) {
    const double scale = gamma[c] / std::sqrt(running_var[c] + kBatchNormEps);
    const double shift = beta[c] - running_mean[c] * scale;
    for (std::size_t b = 0; b < d.batch; ++b) {
      const std::size_t base = (b * d.channels + c) * d.spatial;
      for (std::size_t s = 0; s < d.spatial; ++s) out[base + s] = x[base + s] * scale + shift;
    }
  }
  return out;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma,
                                  const Tensor& grad_out) {
  const Tensor& xh = cache.x_hat;
  if (xh.empty()) throw StateError("batchnorm backward called without a training forward pass");
  if (grad_out.shape() != xh.shape()) {
    throw DimensionError("batchnorm backward: gradient shape " + shape_string(grad_out.shape()));
  }
  const std::size_t batch = xh.dim(0);
  const std::size_t channels = xh.dim(1);
  const std::size_t spatial = xh.rank() == 4 ? xh.dim(2) * xh.dim(3) : 1;
  const double count = static_cast<double>(batch * spatial);
  BatchNormGrads g{Tensor(xh.shape()), Tensor({channels}), Tensor({channels})};
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        sum_g += grad_out[base + s];
        sum_gx += grad_out[base + s] * xh[base + s];
      }
    }
    g.dbeta[c] = sum_g;
    g.dgamma[c] = sum_gx;
    const double k = gamma[c] * cache.inv_std[c] / count;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        g.dx[base + s] = k * (count * grad_out[base + s] - sum_g - xh[base + s] * sum_gx);
      }
    }
  }
  return g;
}

Tensor relu_forward(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  if (x.shape() != grad_out.shape()) throw DimensionError("relu backward: shape mismatch");
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(x[i] > 0.0)) dx[i] = 0.0;
  return dx;
}

Tensor global_avg_pool_forward(const Tensor& x) {
  require_rank(x, 4, "global average pool");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out({n, c, 1, 1});
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < hw; ++j) s += x[i * hw + j];
    out[i] = s / static_cast<double>(hw);
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_out) {
  const std::size_t hw = input_shape.at(2) * input_shape.at(3);
  Tensor dx(input_shape);
  const double inv = 1.0 / static_cast<double>(hw);
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    for (std::size_t j = 0; j < hw; ++j) dx[i * hw + j] = grad_out[i] * inv;
  return dx;
}

Tensor flatten_forward(const Tensor& x) {
  if (x.rank() < 1) throw DimensionError("flatten of a scalar");
  return x.reshaped({x.dim(0), x.dim(0) ? x.size() / x.dim(0) : 0});
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax cross entropy logits");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw DimensionError("softmax cross entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(batch));
  }
  if (batch == 0) throw DimensionError("softmax cross entropy: empty batch");
  LossResult r{0.0, Tensor(logits.shape())};
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ValueError("label " + std::to_string(label) + " out of range [0, " +
                       std::to_string(classes) + ")");
    }
    const double* row = &logits.data()[i * classes];
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    r.loss += (log_z - row[label]) * inv_batch;
    for (std::size_t j = 0; j < classes; ++j) {
      const double p = std::exp(row[j] - log_z);
      r.grad.at(i, j) = (p - (static_cast<std::size_t>(label) == j ? 1.0 : 0.0)) * inv_batch;
    }
  }
  return r;
}

}  // namespace fedhm::nn
