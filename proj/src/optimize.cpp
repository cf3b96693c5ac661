#include "mvsde/optimize.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace mvsde {

Point finite_difference_gradient(const Objective& f, std::span<const double> x, double step_scale) {
  Point g(x.size());
  Point probe(x.begin(), x.end());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double h = step_scale * (1.0 + std::abs(x[k]));
    probe[k] = x[k] + h;
    const double fp = f(probe);
    probe[k] = x[k] - h;
    const double fm = f(probe);
    probe[k] = x[k];
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

LbfgsResult lbfgs_minimize(const Objective& f, Point x0, const LbfgsSettings& settings) {
  const std::size_t n = x0.size();
  LbfgsResult res;
  std::size_t evals = 0;
  auto eval = [&](std::span<const double> x) {
    ++evals;
    return f(x);
  };
  auto grad = [&](std::span<const double> x) {
    evals += 2 * n;
    return finite_difference_gradient(f, x, settings.fd_step);
  };

  Point x = std::move(x0);
  double fx = eval(x);
  Point g = grad(x);
  std::deque<Point> s_hist, y_hist;
  std::deque<double> rho_hist;
  Point dir(n), x_new(n);

  for (std::size_t it = 0; it < settings.max_iterations; ++it) {
    res.iterations = it + 1;
    if (!std::isfinite(fx)) break;
    if (norm(g) <= settings.gradient_tol * (1.0 + std::abs(fx))) {
      res.converged = true;
      break;
    }

    // Two-loop recursion.
    dir = g;
    std::vector<double> a(s_hist.size());
    for (std::size_t m = s_hist.size(); m-- > 0;) {
      a[m] = rho_hist[m] * dot(s_hist[m], dir);
      for (std::size_t k = 0; k < n; ++k) dir[k] -= a[m] * y_hist[m][k];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) gamma = dot(s_hist.back(), y_hist.back()) / norm2(y_hist.back());
    else gamma = 1.0 / std::max(1.0, norm(g));
    for (double& v : dir) v *= gamma;
    for (std::size_t m = 0; m < s_hist.size(); ++m) {
      const double b = rho_hist[m] * dot(y_hist[m], dir);
      for (std::size_t k = 0; k < n; ++k) dir[k] += s_hist[m][k] * (a[m] - b);
    }
    for (double& v : dir) v = -v;

    double slope = dot(g, dir);
    if (!(slope < 0.0)) {
      // Not a descent direction: reset memory and use steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      const double scale = 1.0 / std::max(1.0, norm(g));
      for (std::size_t k = 0; k < n; ++k) dir[k] = -g[k] * scale;
      slope = dot(g, dir);
    }

    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      for (std::size_t k = 0; k < n; ++k) x_new[k] = x[k] + step * dir[k];
      f_new = eval(x_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.converged = true;
      break;
    }

    Point g_new = grad(x_new);
    Point s(n), y(n);
    for (std::size_t k = 0; k < n; ++k) {
      s[k] = x_new[k] - x[k];
      y[k] = g_new[k] - g[k];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12 * norm(s) * norm(y)) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > settings.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double decrease = fx - f_new;
    x = x_new;
    fx = f_new;
    g = std::move(g_new);
    if (decrease <= settings.value_tol * (1.0 + std::abs(fx))) {
      res.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.value = fx;
  res.evaluations = evals;
  return res;
}

}  // namespace mvsde
