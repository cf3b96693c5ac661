#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mvsde/linalg.hpp"

namespace mvsde {

/// Piecewise-constant control on a uniform grid of [0, T]: value k applies on
/// [k dt, (k+1) dt).
class ControlGrid {
 public:
  ControlGrid() = default;
  ControlGrid(double horizon, std::size_t steps, std::size_t dim, std::vector<double> values);

  static ControlGrid zero(double horizon, std::size_t steps, std::size_t dim);
  static ControlGrid constant(double horizon, std::size_t steps, std::span<const double> value);
  /// Samples f at left endpoints.
  static ControlGrid from_function(double horizon, std::size_t steps, std::size_t dim,
                                   const std::function<Point(double)>& f);

  double horizon() const { return horizon_; }
  std::size_t steps() const { return steps_; }
  std::size_t dim() const { return dim_; }
  double dt() const { return horizon_ / static_cast<double>(steps_); }

  std::span<const double> value(std::size_t step) const { return {values_.data() + step * dim_, dim_}; }
  std::span<double> value(std::size_t step) { return {values_.data() + step * dim_, dim_}; }
  std::span<const double> data() const { return values_; }
  std::span<double> data() { return values_; }
  bool is_zero() const;

 private:
  double horizon_ = 0.0;
  std::size_t steps_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

/// 0.5 * sum_k |h_k|^2 dt.
double energy(const ControlGrid& h);

/// A single path (X, K, |K|_TV) on a uniform grid with steps + 1 points.
struct Trajectory {
  double dt = 0.0;
  std::size_t dim = 0;
  std::vector<double> x;
  std::vector<double> k;
  std::vector<double> k_tv;

  std::size_t points() const { return dim == 0 ? 0 : x.size() / dim; }
  std::size_t steps() const { return points() == 0 ? 0 : points() - 1; }
  double horizon() const { return dt * static_cast<double>(steps()); }
  std::span<const double> state(std::size_t n) const { return {x.data() + n * dim, dim}; }
  std::span<const double> reaction(std::size_t n) const { return {k.data() + n * dim, dim}; }
  /// sup_n |x_n - other_n|.
  double sup_distance(const Trajectory& other) const;
};

}  // namespace mvsde
