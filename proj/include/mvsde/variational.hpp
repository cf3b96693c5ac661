#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "mvsde/optimize.hpp"
#include "mvsde/paths.hpp"
#include "mvsde/sde.hpp"

namespace mvsde {

/// A deterministic path together with the control and law used to produce it.
struct SkeletonSolution {
  Trajectory path;
  ControlGrid control;
  /// Frozen law per grid point, (steps + 1) x d: the Dirac path of X^0.
  std::vector<double> law_points;
  SchemeMethod method = SchemeMethod::kProjection;
  double alpha = 0.0;
  double max_domain_distance = 0.0;
  double penalization_bound = 0.0;
};

/// X^0: Euler integration of x' in b(x, delta_x) - A(x) from x0, using the eps = 0
/// members of the coefficient and operator families.
SkeletonSolution solve_limit_ode(const SdeProblem& problem, const SchemeSpec& scheme);

/// Y^h: Euler integration of y' in b(y, delta_{X0}) + sigma(y, delta_{X0}) h - A(y).
SkeletonSolution solve_skeleton(const SdeProblem& problem, const ControlGrid& h, const SkeletonSolution& limit,
                                const SchemeSpec& scheme);

/// nu^psi: nu' in grad b(X0, delta_{X0}) nu + sigma(X0, delta_{X0}) psi - A(nu), nu(0) = 0.
SkeletonSolution solve_mdp_skeleton(const SdeProblem& problem, const ControlGrid& psi, const SkeletonSolution& limit,
                                    const SchemeSpec& scheme);

/// h -> Y^h with the frozen law prepared once; used inside optimizers.
class SkeletonMap {
 public:
  SkeletonMap(const SdeProblem& problem, const SkeletonSolution& limit, const SchemeSpec& scheme);
  ~SkeletonMap();
  SkeletonMap(SkeletonMap&&) noexcept;
  SkeletonMap& operator=(SkeletonMap&&) noexcept;

  std::size_t dim() const;
  std::size_t steps() const;
  double horizon() const;
  const SkeletonSolution& limit() const;
  Trajectory path(const ControlGrid& h) const;
  /// Same, from the stacked control vector (steps x d).
  Trajectory path(std::span<const double> stacked) const;
  SkeletonSolution solve(const ControlGrid& h) const;
  ControlGrid grid(std::span<const double> stacked) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Target set for the rate problem.
struct RateTarget {
  enum class Kind { kHalfSpace, kEndpoint, kTubeExit, kPathMatch };

  Kind kind = Kind::kHalfSpace;
  Point normal;      // half-space: <normal, Y(T)> >= level
  double level = 0.0;
  Point endpoint;    // endpoint: |Y(T) - endpoint| <= tol
  double tol = 1e-3;
  double delta = 0.0;  // tube exit: sup_t |Y - X0| >= delta
  Trajectory path;     // path match: sup_t |Y - path| <= tol

  static RateTarget half_space(Point normal, double level);
  static RateTarget endpoint_equals(Point g, double tol = 1e-3);
  static RateTarget tube_exit(double delta);
  static RateTarget path_match(Trajectory g, double tol = 1e-3);

  void validate(std::size_t dim, std::size_t steps) const;
  /// Nonnegative; zero exactly when the target is met. `smoothing` > 0 replaces the
  /// sup over time by a log-sum-exp upper bound with that temperature.
  double violation(const Trajectory& y, const Trajectory& limit, double smoothing = 0.0) const;
  std::string describe() const;
};

struct RateSettings {
  std::size_t rounds = 5;
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  std::size_t random_restarts = 4;
  double restart_scale = 1.0;
  std::uint64_t seed = 0;
  /// Result counts as feasible when the exact violation is at most this.
  double feasibility_tol = 1e-3;
  LbfgsSettings lbfgs;
  std::size_t workers = 1;
};

struct RateProblem {
  SdeProblem problem;
  RateTarget target;
  SchemeSpec scheme;
  RateSettings settings;

  void validate() const;
};

struct RateStart {
  std::string label;
  double energy = 0.0;
  double violation = 0.0;
  bool feasible = false;
  std::size_t evaluations = 0;
};

struct RateResult {
  ControlGrid h;
  /// energy(h) of the best feasible control; +infinity when none was found.
  double rate = std::numeric_limits<double>::infinity();
  bool feasible = false;
  double violation = 0.0;
  SkeletonSolution path;
  std::vector<RateStart> starts;
  std::size_t evaluations = 0;
};

/// energy(h) + rho violation(Y^h)^2 on the stacked control vector.
Objective rate_objective(const SkeletonMap& map, const RateTarget& target, double rho, double smoothing = 0.0);

RateResult minimize_rate(const RateProblem& rp);

}  // namespace mvsde
