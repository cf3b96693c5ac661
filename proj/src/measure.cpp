#include "mvsde/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mvsde/errors.hpp"

namespace mvsde {

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> points)
    : dim_(dim), points_(std::move(points)) {
  if (dim_ == 0) throw ConfigError("EmpiricalMeasure: dimension must be positive");
  if (points_.empty() || points_.size() % dim_ != 0)
    throw ConfigError("EmpiricalMeasure: need N >= 1 points of dimension d");
  if (!all_finite(points_)) throw ConfigError("EmpiricalMeasure: non-finite point");
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::span<const double> x) {
  return {x.size(), std::vector<double>(x.begin(), x.end())};
}

EmpiricalMeasure EmpiricalMeasure::from_points(const std::vector<Point>& points) {
  if (points.empty()) throw ConfigError("EmpiricalMeasure: empty cloud");
  std::vector<double> flat;
  for (const auto& p : points) {
    if (p.size() != points.front().size()) throw ConfigError("EmpiricalMeasure: ragged points");
    flat.insert(flat.end(), p.begin(), p.end());
  }
  return {points.front().size(), std::move(flat)};
}

Point EmpiricalMeasure::mean() const { return MeasureView::of(points_, dim_).mean; }

double EmpiricalMeasure::second_moment() const { return MeasureView::of(points_, dim_).second_moment; }

double pairwise_sum(std::span<const double> values, std::size_t stride, std::size_t offset) {
  const std::size_t n = values.size() <= offset ? 0 : (values.size() - offset + stride - 1) / stride;
  // Iterative bottom-up pairwise reduction over blocks of 64.
  auto block_sum = [&](std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += values[offset + i * stride];
    return s;
  };
  constexpr std::size_t kBlock = 64;
  if (n <= kBlock) return block_sum(0, n);
  std::vector<double> partial;
  partial.reserve(n / kBlock + 1);
  for (std::size_t b = 0; b < n; b += kBlock) partial.push_back(block_sum(b, std::min(n, b + kBlock)));
  while (partial.size() > 1) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < partial.size(); i += 2)
      partial[out++] = i + 1 < partial.size() ? partial[i] + partial[i + 1] : partial[i];
    partial.resize(out);
  }
  return partial.empty() ? 0.0 : partial.front();
}

MeasureView MeasureView::of(std::span<const double> points, std::size_t dim) {
  MeasureView v;
  v.assign(points, dim);
  return v;
}

void MeasureView::assign(std::span<const double> pts, std::size_t d) {
  dim = d;
  count = pts.size() / d;
  points = pts;
  mean.resize(d);
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t k = 0; k < d; ++k) mean[k] = pairwise_sum(pts, d, k) * inv;
  if (count <= 64) {
    double s = 0.0;
    for (std::size_t i = 0; i < count; ++i) s += norm2(pts.subspan(i * d, d));
    second_moment = s * inv;
    return;
  }
  std::vector<double> sq(count);
  for (std::size_t i = 0; i < count; ++i) sq[i] = norm2(pts.subspan(i * d, d));
  second_moment = pairwise_sum(sq) * inv;
}

double second_moment(const EmpiricalMeasure& mu) { return mu.second_moment(); }

std::vector<std::size_t> exhaustive_assignment(std::span<const double> cost, std::size_t n) {
  if (n > 10) throw ConfigError("exhaustive_assignment: n too large");
  std::vector<std::size_t> perm(n), best(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += cost[i * n + perm[i]];
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Shortest augmenting path (Jonker-Volgenant style potentials), O(n^3).
std::vector<std::size_t> hungarian_assignment(std::span<const double> cost, std::size_t n) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

double wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim() != nu.dim()) throw ConfigError("wasserstein2: dimension mismatch");
  if (mu.size() != nu.size())
    throw UnsupportedError("wasserstein2: only equal particle counts are supported");
  const std::size_t n = mu.size();
  const std::size_t d = mu.dim();
  if (d == 1) {
    std::vector<double> a(mu.data().begin(), mu.data().end());
    std::vector<double> b(nu.data().begin(), nu.data().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(pairwise_sum(sq) / static_cast<double>(n));
  }
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double c = distance(mu.point(i), nu.point(j));
      cost[i * n + j] = c * c;
    }
  const auto assignment = n <= 8 ? exhaustive_assignment(cost, n) : hungarian_assignment(cost, n);
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = cost[i * n + assignment[i]];
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(n));
}

CouplingBoundReport w2_coupling_bound_check(const EmpiricalMeasure& x, const EmpiricalMeasure& y) {
  if (x.size() != y.size() || x.dim() != y.dim())
    throw ConfigError("w2_coupling_bound_check: samples must be paired");
  CouplingBoundReport r;
  r.w2 = wasserstein2(x, y);
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dd = distance(x.point(i), y.point(i));
    sq[i] = dd * dd;
  }
  r.bound = std::sqrt(pairwise_sum(sq) / static_cast<double>(x.size()));
  r.ok = r.w2 <= r.bound + 1e-10;
  return r;
}

}  // namespace mvsde
