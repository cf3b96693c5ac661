#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "mvsde/linalg.hpp"

namespace mvsde {

using Objective = std::function<double(std::span<const double>)>;

/// Central differences with step 1e-5 (1 + |x_k|) per coordinate.
Point finite_difference_gradient(const Objective& f, std::span<const double> x, double step_scale = 1e-5);

struct LbfgsSettings {
  std::size_t max_iterations = 200;
  std::size_t memory = 8;
  double gradient_tol = 1e-9;
  /// Stop when the relative decrease over one iteration drops below this.
  double value_tol = 1e-13;
  double fd_step = 1e-5;
};

struct LbfgsResult {
  Point x;
  double value = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
};

/// Limited-memory BFGS with backtracking Armijo line search and finite-difference
/// gradients. Deterministic given the start.
LbfgsResult lbfgs_minimize(const Objective& f, Point x0, const LbfgsSettings& settings = {});

}  // namespace mvsde
