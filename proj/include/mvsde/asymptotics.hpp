#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mvsde/sde.hpp"
#include "mvsde/variational.hpp"

namespace mvsde {

// ---------------------------------------------------------------------------
// Large deviations: plain Monte Carlo decay-rate sweeps.

/// Path event decided from a simulated path.
struct RareEvent {
  enum class Kind { kHalfSpace, kTubeExit };

  Kind kind = Kind::kHalfSpace;
  Point normal;        // <normal, X(T)> >= level
  double level = 0.0;
  double delta = 0.0;  // sup_t |X - X0| >= delta
  /// X0 on the scheme grid; required for tube exits.
  Trajectory limit;
  bool complement = false;

  static RareEvent half_space(Point normal, double level);
  static RareEvent tube_exit(double delta, Trajectory limit);
  RareEvent complemented() const;
  std::string describe() const;
};

struct LdpRow {
  double eps = 0.0;
  std::size_t paths = 0;
  std::size_t hits = 0;
  double p_hat = 0.0;
  /// 95% Wilson interval; for zero hits, [0, one-sided 95% upper bound].
  double ci_low = 0.0;
  double ci_high = 0.0;
  /// -eps log p_hat (+infinity for zero hits) and its interval from the CI.
  double rate = std::numeric_limits<double>::infinity();
  double rate_low = 0.0;
  double rate_high = std::numeric_limits<double>::infinity();
  bool usable = false;
};

struct LdpTable {
  std::string event;
  std::vector<LdpRow> rows;
  std::vector<std::string> warnings;
};

struct BinomialInterval {
  double low = 0.0;
  double high = 1.0;
};

BinomialInterval wilson_interval(std::size_t hits, std::size_t trials, double z = 1.959963984540054);

/// One simulation per eps (in the given order). Each eps uses its own stream block
/// so rows are independent. The event is evaluated on the fly; nothing but terminal
/// states is kept.
LdpTable ldp_sweep(const SdeProblem& problem, const RareEvent& event, const std::vector<double>& eps_grid,
                   std::size_t paths, const SchemeSpec& scheme, const RngSpec& rng,
                   const SimulationOptions& options = {});

struct RateFit {
  double reference = 0.0;
  /// Linear extrapolation of -eps log p_hat to eps = 0 (least squares in eps; NaN with < 2 rows).
  double extrapolated = std::numeric_limits<double>::quiet_NaN();
  bool extrapolation_skipped = true;
  std::vector<double> eps;
  std::vector<double> gaps;
  /// "consistent" when |gap| shrinks strictly along decreasing eps, else "inconsistent".
  std::string verdict;
};

RateFit fit_rate(const LdpTable& table, double rate_from_variational);

// ---------------------------------------------------------------------------
// Moderate deviations.

enum class MdpStatistic { kTerminalVariance, kTerminalMean, kSupQuantile };

std::string to_string(MdpStatistic s);

struct MdpRow {
  double eps = 0.0;
  double lambda = 0.0;
  double value = 0.0;
  double std_error = 0.0;
  double oracle = 0.0;
  double relative_error = 0.0;
};

struct MdpSettings {
  MdpStatistic statistic = MdpStatistic::kTerminalVariance;
  /// Coordinate the statistic is taken on (terminal variance / mean).
  std::size_t component = 0;
  double quantile = 0.9;
  /// Paths for the Monte Carlo oracle (used when the closed form does not apply); 0 means N.
  std::size_t oracle_paths = 0;
};

struct MdpTable {
  MdpStatistic statistic = MdpStatistic::kTerminalVariance;
  double oracle = 0.0;
  double oracle_std_error = 0.0;
  /// "variance-ode" or "monte-carlo".
  std::string oracle_method;
  std::vector<MdpRow> rows;
  /// |relative error| non-increasing along decreasing eps.
  bool converging = true;
  std::vector<std::string> warnings;
};

/// Statistics are taken on the speed-normalized fluctuation (lambda / sqrt(eps)) M^eps
/// = (Xbar^eps - X^0) / sqrt(eps), whose law converges to the linearized Gaussian limit.
MdpTable mdp_sweep(const SdeProblem& problem, const LambdaRule& lambda, const std::vector<double>& eps_grid,
                   const MdpSettings& settings, std::size_t paths, const SchemeSpec& scheme, const RngSpec& rng,
                   const SimulationOptions& options = {});

/// Covariance at T of dG = grad b(X0) G dt + sigma(X0) dW, G(0) = 0 (A = Zero), by
/// integrating Sigma' = J Sigma + Sigma J^T + sigma sigma^T with RK4 on the limit grid.
Matrix linearized_covariance(const SdeProblem& problem, const SkeletonSolution& limit);

// ---------------------------------------------------------------------------
// Functional law of the iterated logarithm.

enum class LilRegime { kLargeTime, kSmallTime };

/// psi(u) = sqrt(u log log u), u > e.
double lil_psi(double u);
/// phi(u) = sqrt(u log log (1/u)), 0 < u < 1/e.
double lil_phi(double u);
/// Scale for the regime; throws DomainError outside it.
double lil_scale(LilRegime regime, double u);
/// log log u (large time) or log log (1/u) (small time).
double lil_loglog(LilRegime regime, double u);

/// Radial contraction system Gamma_a(y) = center + (y - center) / a.
class ContractionFamily {
 public:
  static ContractionFamily radial(Point center);

  const Point& center() const { return center_; }
  std::size_t dim() const { return center_.size(); }
  void apply(double a, std::span<const double> y, std::span<double> out) const;
  Point apply(double a, std::span<const double> y) const;
  Point inverse(double a, std::span<const double> y) const { return apply(1.0 / a, y); }

  struct AxiomReport {
    double fixed_point_error = 0.0;   // (a)
    double ordering_excess = 0.0;     // (b): max of |G_a y - G_a z| - |G_t y - G_t z| for a >= t
    double identity_error = 0.0;      // (c)
    double continuity_error = 0.0;    // (d): |G_a G_t f - f| at |a t - 1| = 1e-8
    bool ok = true;
  };
  /// Checks the four axioms on random samples with 1e-12 slack.
  AxiomReport check_axioms(std::size_t samples, std::uint64_t seed) const;

 private:
  Point center_;
};

struct LilSpec {
  LilRegime regime = LilRegime::kLargeTime;
  double c = std::exp(1.0);
  int j_min = 4;
  int j_max = 8;
  /// Output grid of Q on [0, horizon].
  double horizon = 1.0;
  std::size_t steps = 100;

  std::vector<double> u_grid() const;
  /// Every u in the regime; throws ConfigError otherwise.
  void validate() const;
};

/// Q_u(t_k) = Gamma_{scale(u)}(Y(u t_k)) on `steps` intervals of [0, Y.horizon() / u],
/// reading Y by linear interpolation.
Trajectory lil_transform(const Trajectory& y, LilRegime regime, double u, const ContractionFamily& family,
                         std::size_t steps);

/// The equation solved by Q_u for the radial family: b~_u, sigma~_u, A~_u with noise
/// level eps = 1 / log log u. Supports A = Zero and normal cones of sets that are
/// cones with apex at the center; anything else raises UnsupportedError.
SdeProblem lil_transformed_problem(const SdeProblem& base, LilRegime regime, double u,
                                   const ContractionFamily& family);

struct LimitSetSettings {
  double energy_budget = 1.0;
  LbfgsSettings lbfgs;
  std::size_t rounds = 5;
  SchemeMethod method = SchemeMethod::kProjection;
};

struct LimitSetDistance {
  double distance = 0.0;
  Trajectory witness;
  ControlGrid control;
  double witness_energy = 0.0;
  bool approximate = false;
};

/// min over h with energy(h) <= budget of sup_t |q - Y^h|, for the skeleton of
/// `problem` on the grid of q.
LimitSetDistance limit_set_distance(const Trajectory& q, const SdeProblem& problem,
                                    const LimitSetSettings& settings = {});

struct LilRow {
  int j = 0;
  double u = 0.0;
  double loglog = 0.0;
  double var_q1 = 0.0;
  double var_std_error = 0.0;
  double var_oracle = 0.0;
  double z_score = 0.0;
  double max_abs_q1 = 0.0;
  std::vector<double> distance_quantiles;  // 0.1, 0.5, 0.9 over the distance sample
};

struct LilReport {
  std::vector<LilRow> rows;
  /// sqrt(2 budget) (1 + 0.25): soft bound on the per-path max over j of |Q_{c^j}(1)|.
  double soft_bound = 0.0;
  double fraction_above_soft_bound = 0.0;
  bool soft_bound_flagged = false;
  std::vector<std::string> notes;
};

struct LilHarnessSettings {
  std::size_t paths = 10000;
  /// Paths per j whose distance to the limit set is computed.
  std::size_t distance_paths = 4;
  LimitSetSettings limit_set;
};

/// Simulates Y on [0, u T] for every u = c^j (independent streams per j), transforms,
/// and reports the pipeline statistics. The variance oracle 1 / log log u applies to
/// the Brownian configuration (b = 0, sigma = I, A = Zero, center = x0).
LilReport lil_harness(const SdeProblem& base, const LilSpec& spec, const ContractionFamily& family,
                      const LilHarnessSettings& settings, const RngSpec& rng, SchemeMethod method,
                      const SimulationOptions& options = {});

/// Sample variance with pairwise sums.
double sample_variance(std::span<const double> v);
double sample_mean(std::span<const double> v);
/// Linear-interpolated empirical quantile.
double empirical_quantile(std::vector<double> v, double q);

}  // namespace mvsde
