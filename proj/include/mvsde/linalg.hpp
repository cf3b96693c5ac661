#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvsde {

/// A point (or vector) in R^d.
using Point = std::vector<double>;

/// Dense row-major matrix. Sizes here are tiny (d x d), so no expression templates.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw std::invalid_argument("Matrix: data size mismatch");
  }

  static Matrix identity(std::size_t n, double scale = 1.0) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = scale;
    return m;
  }
  static Matrix diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return dot(a, a); }
inline double norm(std::span<const double> a) { return std::sqrt(norm2(a)); }

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return std::sqrt(s);
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

/// out = M x (out must not alias x).
inline void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * x[j];
    out[i] = s;
  }
}

inline Point matvec(const Matrix& m, std::span<const double> x) {
  Point out(m.rows());
  matvec(m, x, out);
  return out;
}

/// Frobenius (Hilbert-Schmidt) norm; the norm used for diffusion matrices throughout.
inline double frobenius(const Matrix& m) { return norm(m.data()); }

inline double frobenius_distance(const Matrix& a, const Matrix& b) {
  return distance(a.data(), b.data());
}

/// Solves M y = rhs by Gaussian elimination with partial pivoting. M is small and
/// assumed nonsingular; throws otherwise.
Point solve_linear(Matrix m, Point rhs);

}  // namespace mvsde
