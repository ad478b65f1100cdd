#include "fedhm/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedhm/errors.hpp"

namespace fedhm {

Tensor SvdResult::reconstruct() const {
  Tensor scaled = U;
  const std::size_t k = rank();
  for (std::size_t i = 0; i < scaled.dim(0); ++i)
    for (std::size_t j = 0; j < k; ++j) scaled.at(i, j) *= singular_values[j];
  return matmul_nt(scaled, V);
}

SymmetricEigen symmetric_eigen(const Tensor& S) {
  if (S.rank() != 2 || S.dim(0) != S.dim(1)) {
    throw DimensionError("symmetric_eigen expects a square matrix, got " +
                         shape_string(S.shape()));
  }
  const std::size_t n = S.dim(0);
  Tensor A = S;
  Tensor Q = identity(n);

  double total = 0.0;
  for (double v : A.data()) total += v * v;
  const double threshold = std::numeric_limits<double>::epsilon() * std::sqrt(total);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += A.at(p, q) * A.at(p, q);
    if (std::sqrt(off) <= threshold) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = A.at(p, q);
        if (std::abs(apq) <= std::numeric_limits<double>::min()) continue;
        const double theta = (A.at(q, q) - A.at(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A.at(k, p);
          const double akq = A.at(k, q);
          A.at(k, p) = c * akp - s * akq;
          A.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A.at(p, k);
          const double aqk = A.at(q, k);
          A.at(p, k) = c * apk - s * aqk;
          A.at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double qkp = Q.at(k, p);
          const double qkq = Q.at(k, q);
          Q.at(k, p) = c * qkp - s * qkq;
          Q.at(k, q) = s * qkp + c * qkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return A.at(a, a) > A.at(b, b); });
  SymmetricEigen out{std::vector<double>(n), Tensor({n, n})};
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = A.at(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors.at(i, j) = Q.at(i, order[j]);
  }
  return out;
}

namespace {

// Orthonormalizes column j of Q against columns [0, j) with two passes of
// modified Gram-Schmidt. Returns false if the column collapses.
bool orthonormalize_column(Tensor& Q, std::size_t j) {
  const std::size_t rows = Q.dim(0);
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t c = 0; c < j; ++c) {
      double proj = 0.0;
      for (std::size_t i = 0; i < rows; ++i) proj += Q.at(i, c) * Q.at(i, j);
      for (std::size_t i = 0; i < rows; ++i) Q.at(i, j) -= proj * Q.at(i, c);
    }
  }
  double norm = 0.0;
  for (std::size_t i = 0; i < rows; ++i) norm += Q.at(i, j) * Q.at(i, j);
  norm = std::sqrt(norm);
  if (norm < 1e-6) return false;
  for (std::size_t i = 0; i < rows; ++i) Q.at(i, j) /= norm;
  return true;
}

// Replaces column j with the standard basis vector that keeps the most energy
// after projection onto the complement of columns [0, j).
void complete_column(Tensor& Q, std::size_t j) {
  const std::size_t rows = Q.dim(0);
  std::size_t best = 0;
  double best_residual = -1.0;
  for (std::size_t e = 0; e < rows; ++e) {
    double captured = 0.0;
    for (std::size_t c = 0; c < j; ++c) captured += Q.at(e, c) * Q.at(e, c);
    const double residual = 1.0 - captured;
    if (residual > best_residual + 1e-12) {
      best_residual = residual;
      best = e;
    }
  }
  for (std::size_t i = 0; i < rows; ++i) Q.at(i, j) = i == best ? 1.0 : 0.0;
  orthonormalize_column(Q, j);
}

// SVD for rows >= cols. The eigenvectors of M^T M give a starting V; a
// one-sided Jacobi pass on B = M V then makes the columns of B orthogonal to
// working precision, so small singular values come out with absolute error
// ~eps * sigma_max instead of the sqrt(eps) a pure Gram approach would give.
SvdResult tall_svd(const Tensor& M) {
  const std::size_t rows = M.dim(0), cols = M.dim(1);
  Tensor V = symmetric_eigen(matmul_tn(M, M)).vectors;
  for (std::size_t j = 0; j < cols; ++j) orthonormalize_column(V, j);
  Tensor B = matmul(M, V);

  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          alpha += B.at(i, p) * B.at(i, p);
          beta += B.at(i, q) * B.at(i, q);
          gamma += B.at(i, p) * B.at(i, q);
        }
        if (std::abs(gamma) <= eps * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double bp = B.at(i, p), bq = B.at(i, q);
          B.at(i, p) = c * bp - s * bq;
          B.at(i, q) = s * bp + c * bq;
        }
        for (std::size_t i = 0; i < cols; ++i) {
          const double vp = V.at(i, p), vq = V.at(i, q);
          V.at(i, p) = c * vp - s * vq;
          V.at(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> norms(cols, 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) norms[j] += B.at(i, j) * B.at(i, j);
    norms[j] = std::sqrt(norms[j]);
  }
  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

  SvdResult r{Tensor({rows, cols}), std::vector<double>(cols), Tensor({cols, cols})};
  for (std::size_t j = 0; j < cols; ++j) {
    r.singular_values[j] = norms[order[j]];
    for (std::size_t i = 0; i < cols; ++i) r.V.at(i, j) = V.at(i, order[j]);
  }
  const double null_tol = 1e-10 * r.singular_values[0];
  for (std::size_t j = 0; j < cols; ++j) {
    const double sigma = r.singular_values[j];
    if (sigma <= null_tol || sigma == 0.0) {
      r.singular_values[j] = 0.0;
      complete_column(r.U, j);
      continue;
    }
    for (std::size_t i = 0; i < rows; ++i) r.U.at(i, j) = B.at(i, order[j]) / sigma;
    if (!orthonormalize_column(r.U, j)) complete_column(r.U, j);
  }
  return r;
}

void apply_sign_convention(SvdResult& r) {
  const std::size_t rows = r.U.dim(0), cols_v = r.V.dim(0);
  for (std::size_t j = 0; j < r.rank(); ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < rows; ++i) {
      const double a = std::abs(r.U.at(i, j));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (r.U.at(arg, j) < 0.0) {
      for (std::size_t i = 0; i < rows; ++i) r.U.at(i, j) = -r.U.at(i, j);
      for (std::size_t i = 0; i < cols_v; ++i) r.V.at(i, j) = -r.V.at(i, j);
    }
  }
}

}  // namespace

SvdResult svd(const Tensor& M) {
  if (M.rank() != 2) throw DimensionError("svd expects a matrix, got " + shape_string(M.shape()));
  if (M.size() == 0) throw DimensionError("svd of an empty matrix");
  SvdResult r;
  if (M.dim(0) >= M.dim(1)) {
    r = tall_svd(M);
  } else {
    SvdResult t = tall_svd(transpose(M));
    r = SvdResult{std::move(t.V), std::move(t.singular_values), std::move(t.U)};
  }
  apply_sign_convention(r);
  return r;
}

SvdResult truncated_svd(const Tensor& M, std::size_t r) {
  if (r == 0) throw ValueError("truncated_svd: rank must be at least 1");
  SvdResult full = svd(M);
  const std::size_t keep = std::min(r, full.rank());
  if (keep == full.rank()) return full;
  auto take_columns = [keep](const Tensor& A) {
    Tensor out({A.dim(0), keep});
    for (std::size_t i = 0; i < A.dim(0); ++i)
      for (std::size_t j = 0; j < keep; ++j) out.at(i, j) = A.at(i, j);
    return out;
  };
  return SvdResult{take_columns(full.U),
                   std::vector<double>(full.singular_values.begin(),
                                       full.singular_values.begin() + static_cast<long>(keep)),
                   take_columns(full.V)};
}

}  // namespace fedhm
