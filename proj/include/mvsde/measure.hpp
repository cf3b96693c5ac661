#pragma once

#include <span>
#include <vector>

#include "mvsde/linalg.hpp"

namespace mvsde {

/// Equally weighted cloud of N points in R^d, stored row-major.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(std::size_t dim, std::vector<double> points);
  static EmpiricalMeasure dirac(std::span<const double> x);
  static EmpiricalMeasure from_points(const std::vector<Point>& points);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return points_.size() / dim_; }
  std::span<const double> point(std::size_t i) const { return {points_.data() + i * dim_, dim_}; }
  std::span<const double> data() const { return points_; }

  Point mean() const;
  /// ||mu||_2^2 = (1/N) sum |x_i|^2.
  double second_moment() const;

 private:
  std::size_t dim_;
  std::vector<double> points_;
};

/// Summary statistics of a cloud, computed once per time step and shared by all
/// coefficient evaluations in that step. `points` views the full cloud.
struct MeasureView {
  std::size_t dim = 0;
  std::size_t count = 0;
  std::span<const double> points;
  Point mean;
  double second_moment = 0.0;

  static MeasureView of(std::span<const double> points, std::size_t dim);
  static MeasureView of(const EmpiricalMeasure& mu) { return of(mu.data(), mu.dim()); }
  /// Recomputes the statistics for new points, reusing storage.
  void assign(std::span<const double> points, std::size_t dim);
  std::span<const double> point(std::size_t i) const { return points.subspan(i * dim, dim); }
  EmpiricalMeasure to_measure() const { return {dim, {points.begin(), points.end()}}; }
};

/// Pairwise summation of a strided column; deterministic for a given input order.
double pairwise_sum(std::span<const double> values, std::size_t stride = 1, std::size_t offset = 0);

double second_moment(const EmpiricalMeasure& mu);

/// Exact W2 between equal-count clouds: sorted pairing in 1-D, brute-force
/// permutations for N <= 8, Hungarian assignment otherwise.
double wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

/// Minimum-cost perfect matching on an n x n cost matrix (row-major); returns the
/// column assigned to each row.
std::vector<std::size_t> hungarian_assignment(std::span<const double> cost, std::size_t n);
/// Brute force over all permutations; n <= 10.
std::vector<std::size_t> exhaustive_assignment(std::span<const double> cost, std::size_t n);

struct CouplingBoundReport {
  double w2 = 0.0;
  double bound = 0.0;
  bool ok = true;
};

/// Checks W2(emp X, emp Y) <= sqrt(mean |X_i - Y_i|^2) + 1e-10 for paired samples.
CouplingBoundReport w2_coupling_bound_check(const EmpiricalMeasure& x, const EmpiricalMeasure& y);

}  // namespace mvsde
