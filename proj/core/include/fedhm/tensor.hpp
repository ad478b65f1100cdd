#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fedhm {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major n-dimensional array of doubles.
///
/// Invariant: product(shape) == data.size(). A default-constructed tensor has
/// an empty shape and no data and is used as "absent" (e.g. a missing bias).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return shape_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }
  double& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) noexcept {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  double at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const noexcept {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  /// Same data viewed under a new shape with an equal element count.
  Tensor reshaped(Shape shape) const;

  void fill(double value);
  bool all_finite() const noexcept;

  /// Throws StateError if any value is NaN or infinite.
  void check_finite(const char* where) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Elementwise and matrix helpers. All of them validate shapes and throw
// DimensionError on mismatch.

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
void axpy(double alpha, const Tensor& x, Tensor& y);  // y += alpha * x

/// (m, k) x (k, n)
Tensor matmul(const Tensor& a, const Tensor& b);
/// (m, k) x (n, k)^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// (k, m)^T x (k, n)
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor identity(std::size_t n);

double dot(const Tensor& a, const Tensor& b);
double frobenius_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
/// ||a - b||_F / max(||b||_F, tiny)
double relative_error(const Tensor& a, const Tensor& b);

}  // namespace fedhm
