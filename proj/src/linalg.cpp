#include "mvsde/linalg.hpp"

#include <utility>

namespace mvsde {

Point solve_linear(Matrix m, Point rhs) {
  const std::size_t n = m.rows();
  if (m.cols() != n || rhs.size() != n) throw std::invalid_argument("solve_linear: shape mismatch");
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m(r, col)) > std::abs(m(pivot, col))) pivot = r;
    if (m(pivot, col) == 0.0) throw std::invalid_argument("solve_linear: singular matrix");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(m(col, c), m(pivot, c));
      std::swap(rhs[col], rhs[pivot]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = m(r, col) / m(col, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) m(r, c) -= f * m(col, c);
      rhs[r] -= f * rhs[col];
    }
  }
  Point y(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = rhs[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= m(i, c) * y[c];
    y[i] = s / m(i, i);
  }
  return y;
}

}  // namespace mvsde
