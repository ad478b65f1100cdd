#pragma once

#include <cstddef>
#include <vector>

#include "fedhm/tensor.hpp"

namespace fedhm {

/// Thin singular value decomposition M ~= U diag(sigma) V^T.
///
/// U is (rows, k), V is (cols, k), singular values are non-increasing and
/// non-negative. Sign convention: the largest-magnitude entry of every left
/// singular vector is non-negative (ties resolved toward the lowest index).
struct SvdResult {
  Tensor U;
  std::vector<double> singular_values;
  Tensor V;

  std::size_t rank() const noexcept { return singular_values.size(); }
  /// U diag(sigma) V^T
  Tensor reconstruct() const;
};

struct SymmetricEigen {
  std::vector<double> values;  // non-increasing
  Tensor vectors;              // column j pairs with values[j]
};

/// Cyclic Jacobi eigensolver for a symmetric matrix.
SymmetricEigen symmetric_eigen(const Tensor& S);

/// Full thin SVD with k = min(rows, cols) components.
SvdResult svd(const Tensor& M);

/// Leading min(r, min(rows, cols)) components of svd(M). Throws on an empty
/// matrix or r == 0.
SvdResult truncated_svd(const Tensor& M, std::size_t r);

}  // namespace fedhm
