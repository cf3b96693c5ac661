#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace oracle {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double gaussian_ldp_rate(double eps, double a) { return -eps * std::log(normal_tail(a / std::sqrt(eps))); }

double reflected_bm_cdf(double a, double t) { return 2.0 * normal_cdf(a / std::sqrt(t)) - 1.0; }

double ou_variance(double t) { return (1.0 - std::exp(-2.0 * t)) / 2.0; }

double folded_normal_mean(double s) { return s * std::sqrt(2.0 / std::numbers::pi); }

std::vector<double> skorokhod_reflect(const std::vector<double>& z) {
  std::vector<double> y(z.size());
  double push = 0.0;
  for (std::size_t n = 0; n < z.size(); ++n) {
    push = std::max(push, -z[n]);
    y[n] = z[n] + push;
  }
  return y;
}

namespace {

bool exits(double x0, double delta, double dt, std::size_t steps, double c, std::size_t a, std::size_t b) {
  std::vector<double> z(steps + 1, x0);
  for (std::size_t n = 0; n < steps; ++n) z[n + 1] = z[n] + ((n >= a && n < b) ? c : 0.0) * dt;
  const auto y = skorokhod_reflect(z);
  for (double v : y)
    if (std::abs(v - x0) >= delta) return true;
  return false;
}

}  // namespace

RampSearch reflected_tube_exit_ramp_search(double x0, double delta, double horizon, std::size_t steps) {
  const double dt = horizon / static_cast<double>(steps);
  RampSearch best;
  best.rate = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < steps; ++a) {
    for (std::size_t b = a + 1; b <= steps; ++b) {
      for (double sign : {1.0, -1.0}) {
        double lo = 0.0, hi = 1e3;
        if (!exits(x0, delta, dt, steps, sign * hi, a, b)) continue;
        for (int it = 0; it < 80; ++it) {
          const double mid = 0.5 * (lo + hi);
          if (exits(x0, delta, dt, steps, sign * mid, a, b))
            hi = mid;
          else
            lo = mid;
        }
        const double e = 0.5 * hi * hi * dt * static_cast<double>(b - a);
        if (e < best.rate) best = {e, sign * hi, dt * static_cast<double>(a), dt * static_cast<double>(b)};
      }
    }
  }
  return best;
}

}  // namespace oracle
