#pragma once

#include <cstddef>
#include <string>
#include <utility>

#include "fedhm/svd.hpp"
#include "fedhm/tensor.hpp"

namespace fedhm {

/// Conv weight (n, m, k, k) unrolled to an (m k, n k) matrix with
/// M[i k + ky, o k + kx] = W[o, i, ky, kx].
struct UnrolledMatrix {
  Tensor matrix;
  std::size_t out_channels = 0;  // n
  std::size_t in_channels = 0;   // m
  std::size_t kernel = 0;        // k
};

UnrolledMatrix unroll_conv(const Tensor& W);
Tensor fold_conv(const Tensor& M, std::size_t out_channels, std::size_t in_channels,
                 std::size_t kernel);
inline Tensor fold_conv(const UnrolledMatrix& u) {
  return fold_conv(u.matrix, u.out_channels, u.in_channels, u.kernel);
}

enum class FactorKind { Dense, Conv };

/// Low-rank replacement (U, V) of one weight.
///
/// Dense: U is (m, r), V is (n, r) and W ~= U V^T.
/// Conv:  U is (r, m, k, 1), V is (n, r, 1, k); their unrolled forms are
///        (m k, r) and (n k, r).
struct FactorizedPair {
  FactorKind kind = FactorKind::Dense;
  Tensor U;
  Tensor V;
  std::size_t rank = 0;
  std::string origin;
};

/// Unrolled (m k, r) / (n k, r) views of conv factors; dense factors pass through.
Tensor unrolled_u(const Tensor& U);
Tensor unrolled_v(const Tensor& V);
/// Inverse of unrolled_u / unrolled_v for conv factors.
Tensor conv_u_from_unrolled(const Tensor& Um, std::size_t in_channels, std::size_t kernel);
Tensor conv_v_from_unrolled(const Tensor& Vm, std::size_t out_channels, std::size_t kernel);

/// Largest admissible rank: min(m k, n k) for conv, min(m, n) for dense.
std::size_t max_rank(const Shape& weight_shape);

/// max(1, floor(gamma * max_rank)). gamma must lie in (0, 1].
std::size_t layer_rank(const Shape& weight_shape, double gamma);

/// Spectral initialization: truncated SVD of the (unrolled) weight with the
/// singular values split evenly, U' = U_r sqrt(S_r), V' = V_r sqrt(S_r).
/// A rank above max_rank is clamped; `FactorizedPair::rank` holds the
/// effective value.
FactorizedPair spectral_factorize(const Tensor& W, std::size_t rank, std::string origin = {});

/// Full-rank weight with the original layer shape: U V^T (dense) or
/// fold(U_unrolled V_unrolled^T) (conv).
Tensor recover_layer(const FactorizedPair& pair);
Tensor recover_weight(const Tensor& U, const Tensor& V);

/// (lambda / 2) ||U V^T||_F^2 on the unrolled factors.
double frobenius_decay_penalty(const Tensor& U, const Tensor& V, double lambda);

/// Gradient of frobenius_decay_penalty: (lambda U (V^T V), lambda V (U^T U)),
/// returned in the factors' own shapes.
std::pair<Tensor, Tensor> frobenius_decay_grad(const Tensor& U, const Tensor& V, double lambda);
inline std::pair<Tensor, Tensor> frobenius_decay_grad(const FactorizedPair& pair, double lambda) {
  return frobenius_decay_grad(pair.U, pair.V, lambda);
}

}  // namespace fedhm
