#include "fedhm/factorize.hpp"

#include <algorithm>
#include <cmath>

#include "fedhm/errors.hpp"

namespace fedhm {

UnrolledMatrix unroll_conv(const Tensor& W) {
  if (W.rank() != 4 || W.dim(2) != W.dim(3)) {
    throw DimensionError("unroll_conv expects a square-kernel 4D weight, got " +
                         shape_string(W.shape()));
  }
  const std::size_t n = W.dim(0), m = W.dim(1), k = W.dim(2);
  UnrolledMatrix u{Tensor({m * k, n * k}), n, m, k};
  for (std::size_t o = 0; o < n; ++o)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) u.matrix.at(i * k + ky, o * k + kx) = W.at(o, i, ky, kx);
  return u;
}

Tensor fold_conv(const Tensor& M, std::size_t n, std::size_t m, std::size_t k) {
  if (M.rank() != 2 || M.dim(0) != m * k || M.dim(1) != n * k) {
    throw DimensionError("fold_conv: matrix " + shape_string(M.shape()) +
                         " inconsistent with (n, m, k) = (" + std::to_string(n) + ", " +
                         std::to_string(m) + ", " + std::to_string(k) + ")");
  }
  Tensor W({n, m, k, k});
  for (std::size_t o = 0; o < n; ++o)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) W.at(o, i, ky, kx) = M.at(i * k + ky, o * k + kx);
  return W;
}

Tensor unrolled_u(const Tensor& U) {
  if (U.rank() == 2) return U;
  if (U.rank() != 4 || U.dim(3) != 1) {
    throw DimensionError("conv U factor must be (r, m, k, 1), got " + shape_string(U.shape()));
  }
  const std::size_t r = U.dim(0), m = U.dim(1), k = U.dim(2);
  Tensor out({m * k, r});
  for (std::size_t j = 0; j < r; ++j)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ky = 0; ky < k; ++ky) out.at(i * k + ky, j) = U.at(j, i, ky, 0);
  return out;
}

Tensor unrolled_v(const Tensor& V) {
  if (V.rank() == 2) return V;
  if (V.rank() != 4 || V.dim(2) != 1) {
    throw DimensionError("conv V factor must be (n, r, 1, k), got " + shape_string(V.shape()));
  }
  const std::size_t n = V.dim(0), r = V.dim(1), k = V.dim(3);
  Tensor out({n * k, r});
  for (std::size_t o = 0; o < n; ++o)
    for (std::size_t j = 0; j < r; ++j)
      for (std::size_t kx = 0; kx < k; ++kx) out.at(o * k + kx, j) = V.at(o, j, 0, kx);
  return out;
}

Tensor conv_u_from_unrolled(const Tensor& Um, std::size_t m, std::size_t k) {
  if (Um.rank() != 2 || Um.dim(0) != m * k) {
    throw DimensionError("conv_u_from_unrolled: shape " + shape_string(Um.shape()));
  }
  const std::size_t r = Um.dim(1);
  Tensor U({r, m, k, 1});
  for (std::size_t j = 0; j < r; ++j)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t ky = 0; ky < k; ++ky) U.at(j, i, ky, 0) = Um.at(i * k + ky, j);
  return U;
}

Tensor conv_v_from_unrolled(const Tensor& Vm, std::size_t n, std::size_t k) {
  if (Vm.rank() != 2 || Vm.dim(0) != n * k) {
    throw DimensionError("conv_v_from_unrolled: shape " + shape_string(Vm.shape()));
  }
  const std::size_t r = Vm.dim(1);
  Tensor V({n, r, 1, k});
  for (std::size_t o = 0; o < n; ++o)
    for (std::size_t j = 0; j < r; ++j)
      for (std::size_t kx = 0; kx < k; ++kx) V.at(o, j, 0, kx) = Vm.at(o * k + kx, j);
  return V;
}

std::size_t max_rank(const Shape& s) {
  if (s.size() == 2) return std::min(s[0], s[1]);
  if (s.size() == 4) return std::min(s[1] * s[2], s[0] * s[2]);
  throw DimensionError("max_rank: not a dense or conv weight shape " + shape_string(s));
}

std::size_t layer_rank(const Shape& weight_shape, double gamma) {
  if (!(gamma > 0.0) || gamma > 1.0) {
    throw ValueError("rank ratio must lie in (0, 1], got " + std::to_string(gamma));
  }
  const std::size_t full = max_rank(weight_shape);
  // The epsilon keeps products such as 0.29 * 100 from flooring to 28.
  const auto r = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(full) + 1e-9));
  return std::clamp<std::size_t>(r, 1, full);
}

FactorizedPair spectral_factorize(const Tensor& W, std::size_t rank, std::string origin) {
  if (rank == 0) throw ValueError("spectral_factorize: rank must be at least 1");
  if (W.rank() != 2 && W.rank() != 4) {
    throw DimensionError("spectral_factorize: unsupported weight shape " + shape_string(W.shape()));
  }
  const bool conv = W.rank() == 4;
  const SvdResult s = conv ? truncated_svd(unroll_conv(W).matrix, rank) : truncated_svd(W, rank);

  Tensor Um = s.U;
  Tensor Vm = s.V;
  for (std::size_t j = 0; j < s.rank(); ++j) {
    const double root = std::sqrt(s.singular_values[j]);
    for (std::size_t i = 0; i < Um.dim(0); ++i) Um.at(i, j) *= root;
    for (std::size_t i = 0; i < Vm.dim(0); ++i) Vm.at(i, j) *= root;
  }

  FactorizedPair pair;
  pair.kind = conv ? FactorKind::Conv : FactorKind::Dense;
  pair.rank = s.rank();
  pair.origin = std::move(origin);
  if (conv) {
    pair.U = conv_u_from_unrolled(Um, W.dim(1), W.dim(2));
    pair.V = conv_v_from_unrolled(Vm, W.dim(0), W.dim(2));
  } else {
    pair.U = std::move(Um);
    pair.V = std::move(Vm);
  }
  return pair;
}

Tensor recover_weight(const Tensor& U, const Tensor& V) {
  if (U.rank() == 2 && V.rank() == 2) {
    if (U.dim(1) != V.dim(1)) {
      throw DimensionError("recover: U " + shape_string(U.shape()) + " and V " +
                           shape_string(V.shape()) + " disagree on rank");
    }
    return matmul_nt(U, V);
  }
  if (U.rank() == 4 && V.rank() == 4) {
    if (U.dim(0) != V.dim(1) || U.dim(2) != V.dim(3)) {
      throw DimensionError("recover: conv factors U " + shape_string(U.shape()) + " and V " +
                           shape_string(V.shape()) + " are incompatible");
    }
    return fold_conv(matmul_nt(unrolled_u(U), unrolled_v(V)), V.dim(0), U.dim(1), U.dim(2));
  }
  throw DimensionError("recover: mixed factor ranks " + shape_string(U.shape()) + ", " +
                       shape_string(V.shape()));
}

Tensor recover_layer(const FactorizedPair& pair) { return recover_weight(pair.U, pair.V); }

double frobenius_decay_penalty(const Tensor& U, const Tensor& V, double lambda) {
  const Tensor P = matmul_nt(unrolled_u(U), unrolled_v(V));
  return 0.5 * lambda * dot(P, P);
}

std::pair<Tensor, Tensor> frobenius_decay_grad(const Tensor& U, const Tensor& V, double lambda) {
  if (lambda < 0.0) throw ValueError("Frobenius decay coefficient must be non-negative");
  const Tensor Um = unrolled_u(U);
  const Tensor Vm = unrolled_v(V);
  if (Um.dim(1) != Vm.dim(1)) {
    throw DimensionError("frobenius_decay_grad: factor ranks differ");
  }
  Tensor gU = lambda * matmul(Um, matmul_tn(Vm, Vm));
  Tensor gV = lambda * matmul(Vm, matmul_tn(Um, Um));
  if (U.rank() == 4) {
    gU = conv_u_from_unrolled(gU, U.dim(1), U.dim(2));
    gV = conv_v_from_unrolled(gV, V.dim(0), V.dim(3));
  }
  return {std::move(gU), std::move(gV)};
}

}  // namespace fedhm
