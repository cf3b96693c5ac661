#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mvsde/coeffs.hpp"
#include "mvsde/measure.hpp"
#include "mvsde/monotone.hpp"
#include "mvsde/paths.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

class WorkerPool;

using OperatorFamily = std::function<MonotoneOperator(double eps)>;

/// dX in b_eps(X, law X) dt + sqrt(eps) sigma_eps(X, law X) dW - A_eps(X) dt on [0, T].
struct SdeProblem {
  MonotoneOperator op = MonotoneOperator::zero(1);
  /// eps -> A_eps; when empty, A_eps = A.
  OperatorFamily op_family;
  PerturbationFamily coeffs = PerturbationFamily::constant(
      {Drift::affine({0.0}, Matrix(1, 1), Matrix(1, 1)), Diffusion::scalar(1, 1.0)});
  Point x0 = {0.0};
  /// Optional initial cloud (N points); overrides x0 when set.
  std::optional<EmpiricalMeasure> initial_cloud;
  double horizon = 1.0;
  double eps = 1.0;

  std::size_t dim() const { return op.dim(); }
  MonotoneOperator operator_at(double e) const { return op_family ? op_family(e) : op; }
  /// Throws ConfigError: T > 0, eps in [0, 1], matching dimensions, x0 within 1e-12 of closure D(A).
  void validate() const;
};

enum class SchemeMethod { kYosidaPenalized, kProjection };

std::string to_string(SchemeMethod m);

struct SchemeSpec {
  SchemeMethod method = SchemeMethod::kProjection;
  double dt = 1e-3;
  /// Penalization parameter; defaults to alpha = dt.
  std::optional<double> alpha;

  double alpha_value() const { return alpha.value_or(dt); }
  /// T / dt, which must be an integer (relative tolerance 1e-9).
  std::size_t steps(double horizon) const;
  void validate(const MonotoneOperator& op, double horizon) const;
};

/// Per-run knobs that never change results.
struct SimulationOptions {
  /// Record every k-th step (plus the last); 0 records only t = 0 and t = T.
  std::size_t record_every = 1;
  std::size_t workers = 1;
  /// Optional externally owned pool (overrides `workers`).
  WorkerPool* pool = nullptr;
  /// Called after every step with the step index just completed (1-based time
  /// index) and the full state array (N x d, row-major).
  std::function<void(std::size_t, std::span<const double>)> observer;
};

/// N particle trajectories with their finite-variation processes, recorded on a
/// subsampled grid. Arrays are particle-major: [particle][record][component].
struct PathEnsemble {
  std::size_t dim = 0;
  std::size_t particles = 0;
  std::size_t steps = 0;
  double dt = 0.0;
  SchemeMethod method = SchemeMethod::kProjection;
  double alpha = 0.0;
  RngSpec rng;
  std::vector<std::size_t> recorded_steps;
  std::vector<double> x;
  std::vector<double> k;
  std::vector<double> k_tv;
  /// Penalized scheme: largest distance to closure D(A) and the bound alpha * max |A^alpha|.
  double max_domain_distance = 0.0;
  double penalization_bound = 0.0;
  std::vector<std::string> warnings;

  std::size_t records() const { return recorded_steps.size(); }
  double time(std::size_t r) const { return dt * static_cast<double>(recorded_steps[r]); }
  std::span<const double> state(std::size_t i, std::size_t r) const {
    return {x.data() + (i * records() + r) * dim, dim};
  }
  std::span<const double> reaction(std::size_t i, std::size_t r) const {
    return {k.data() + (i * records() + r) * dim, dim};
  }
  double total_variation(std::size_t i, std::size_t r) const { return k_tv[i * records() + r]; }
  std::span<const double> terminal(std::size_t i) const { return state(i, records() - 1); }
  bool records_every_step() const { return records() == steps + 1; }
  /// Terminal states as a cloud.
  EmpiricalMeasure terminal_measure() const;
  /// Path of particle i (requires every step to be recorded).
  Trajectory trajectory(std::size_t i) const;
};

/// Law of the ensemble at every step, for freezing into a controlled run.
std::vector<EmpiricalMeasure> law_path(const PathEnsemble& ensemble);

PathEnsemble simulate(const SdeProblem& problem, const SchemeSpec& scheme, std::size_t particles,
                      const RngSpec& rng, const SimulationOptions& options = {});

/// Coefficients take the frozen law (one measure per step, or per grid point) and
/// the drift gains sigma_eps(Z, frozen) h(t).
PathEnsemble simulate_controlled(const SdeProblem& problem, const std::vector<EmpiricalMeasure>& frozen_law,
                                 const ControlGrid& control, const SchemeSpec& scheme, std::size_t particles,
                                 const RngSpec& rng, const SimulationOptions& options = {});

using LambdaRule = std::function<double(double eps)>;

/// lambda(eps) = eps^p.
LambdaRule power_lambda(double exponent = 0.25);

struct ScalingCheck {
  bool ok = true;
  std::string message;
};

/// Checks lambda -> 0 and eps / lambda^2 -> 0 along a decreasing grid; for a single
/// eps, compares against eps / 10.
ScalingCheck check_mdp_scaling(const LambdaRule& lambda, const std::vector<double>& eps_grid);

struct MdpSpec {
  LambdaRule lambda = power_lambda(0.25);
  /// Limit path X^0 on the scheme grid (steps + 1 points).
  Trajectory limit_path;
  /// Optional control psi.
  std::optional<ControlGrid> control;
};

/// Simulates M^eps = (Xbar^eps - X^0) / lambda(eps) directly, with -A_eps(M) treated by the scheme.
PathEnsemble simulate_mdp(const SdeProblem& problem, const MdpSpec& mdp, const SchemeSpec& scheme,
                          std::size_t particles, const RngSpec& rng, const SimulationOptions& options = {});

struct GraphSample {
  Point x, y;
};

struct MonotonicityReport {
  bool applicable = true;
  std::string note;
  /// min over particles and graph samples of (sum + tolerance); negative means a violation.
  double worst_margin = std::numeric_limits<double>::infinity();
  double worst_sum = std::numeric_limits<double>::infinity();
  double tolerance = 0.0;
  std::size_t violations = 0;
  std::size_t worst_particle = 0;
  std::size_t worst_graph_sample = 0;
};

/// Discrete check of sum_n <X_n - x, dK_n - y dt> >= -tol for (x, y) in Gr(A).
MonotonicityReport k_monotonicity_diag(const PathEnsemble& ensemble, const std::vector<GraphSample>& graph);

// Ensemble export. CSV columns: time, particle, x0.., k0.., k_tv. The binary dump
// is a header (magic "MVSDEENS", u32 version = 1, u32 d, u64 N, u64 steps) followed
// by N * records rows of (2 + 2d + 1) little-endian doubles in CSV row order.
void write_ensemble_csv(const PathEnsemble& ensemble, std::ostream& out);
void write_ensemble_binary(const PathEnsemble& ensemble, std::ostream& out);
/// Reads a binary dump back (times, states, K, K_tv only).
PathEnsemble read_ensemble_binary(std::istream& in);

}  // namespace mvsde
