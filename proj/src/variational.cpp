#include "mvsde/variational.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "engine.hpp"
#include "mvsde/errors.hpp"
#include "mvsde/parallel.hpp"

namespace mvsde {

namespace {

detail::EngineSpec deterministic_spec(const SdeProblem& problem, const SchemeSpec& scheme) {
  SdeProblem p = problem;
  p.eps = 0.0;
  p.initial_cloud.reset();
  p.validate();
  detail::EngineSpec spec;
  spec.op = p.operator_at(0.0);
  scheme.validate(spec.op, p.horizon);
  spec.dim = p.dim();
  spec.particles = 1;
  spec.steps = scheme.steps(p.horizon);
  spec.dt = p.horizon / static_cast<double>(spec.steps);
  spec.method = scheme.method;
  spec.alpha = scheme.alpha_value();
  spec.coeffs = p.coeffs.base();
  spec.noise_scale = 0.0;
  spec.initial = p.x0;
  return spec;
}

SkeletonSolution to_solution(const PathEnsemble& ens, ControlGrid control, std::vector<double> law) {
  SkeletonSolution s;
  s.path = ens.trajectory(0);
  s.control = std::move(control);
  s.law_points = std::move(law);
  s.method = ens.method;
  s.alpha = ens.alpha;
  s.max_domain_distance = ens.max_domain_distance;
  s.penalization_bound = ens.penalization_bound;
  return s;
}

void check_grid(const ControlGrid& h, const detail::EngineSpec& spec) {
  if (h.steps() != spec.steps || h.dim() != spec.dim || std::abs(h.dt() - spec.dt) > 1e-12 * spec.dt)
    throw ConfigError("control grid does not match the solver grid");
}

void check_limit(const SkeletonSolution& limit, const detail::EngineSpec& spec) {
  if (limit.path.dim != spec.dim || limit.path.steps() != spec.steps ||
      std::abs(limit.path.dt - spec.dt) > 1e-12 * spec.dt)
    throw ConfigError("limit path does not match the solver grid");
}

}  // namespace

SkeletonSolution solve_limit_ode(const SdeProblem& problem, const SchemeSpec& scheme) {
  const detail::EngineSpec spec = deterministic_spec(problem, scheme);
  const PathEnsemble ens = detail::run_engine(spec, {});
  SkeletonSolution s = to_solution(ens, ControlGrid::zero(problem.horizon, spec.steps, spec.dim), {});
  s.law_points = s.path.x;
  return s;
}

struct SkeletonMap::Impl {
  detail::EngineSpec spec;
  SkeletonSolution limit;
  std::vector<MeasureView> views;
};

SkeletonMap::SkeletonMap(const SdeProblem& problem, const SkeletonSolution& limit, const SchemeSpec& scheme)
    : impl_(std::make_unique<Impl>()) {
  impl_->spec = deterministic_spec(problem, scheme);
  check_limit(limit, impl_->spec);
  impl_->limit = limit;
  const std::size_t d = impl_->spec.dim;
  const auto& pts = impl_->limit.law_points;
  if (pts.size() != (impl_->spec.steps + 1) * d) throw ConfigError("law path has the wrong length");
  impl_->views.reserve(impl_->spec.steps + 1);
  for (std::size_t n = 0; n <= impl_->spec.steps; ++n)
    impl_->views.push_back(MeasureView::of(std::span<const double>(pts).subspan(n * d, d), d));
  impl_->spec.law = detail::LawSource::kFrozen;
  impl_->spec.frozen = impl_->views;
}

SkeletonMap::~SkeletonMap() = default;
SkeletonMap::SkeletonMap(SkeletonMap&&) noexcept = default;
SkeletonMap& SkeletonMap::operator=(SkeletonMap&&) noexcept = default;

std::size_t SkeletonMap::dim() const { return impl_->spec.dim; }
std::size_t SkeletonMap::steps() const { return impl_->spec.steps; }
double SkeletonMap::horizon() const { return impl_->spec.dt * static_cast<double>(impl_->spec.steps); }
const SkeletonSolution& SkeletonMap::limit() const { return impl_->limit; }

ControlGrid SkeletonMap::grid(std::span<const double> stacked) const {
  return {impl_->limit.path.horizon(), steps(), dim(), {stacked.begin(), stacked.end()}};
}

Trajectory SkeletonMap::path(const ControlGrid& h) const {
  check_grid(h, impl_->spec);
  return detail::run_engine(impl_->spec, {}, &h).trajectory(0);
}

Trajectory SkeletonMap::path(std::span<const double> stacked) const { return path(grid(stacked)); }

SkeletonSolution SkeletonMap::solve(const ControlGrid& h) const {
  check_grid(h, impl_->spec);
  return to_solution(detail::run_engine(impl_->spec, {}, &h), h, impl_->limit.law_points);
}

SkeletonSolution solve_skeleton(const SdeProblem& problem, const ControlGrid& h, const SkeletonSolution& limit,
                                const SchemeSpec& scheme) {
  return SkeletonMap(problem, limit, scheme).solve(h);
}

SkeletonSolution solve_mdp_skeleton(const SdeProblem& problem, const ControlGrid& psi, const SkeletonSolution& limit,
                                    const SchemeSpec& scheme) {
  const detail::EngineSpec spec = deterministic_spec(problem, scheme);
  check_grid(psi, spec);
  check_limit(limit, spec);
  const std::size_t d = spec.dim;
  const double dt = spec.dt;
  const bool penalized = spec.method == SchemeMethod::kYosidaPenalized;
  std::optional<ConvexSet> cone;
  if (!penalized) cone = spec.op.as_normal_cone();
  const ConvexSet& domain = spec.op.domain();

  SkeletonSolution out;
  out.control = psi;
  out.law_points = limit.law_points;
  out.method = spec.method;
  out.alpha = spec.alpha;
  Trajectory& tr = out.path;
  tr.dt = dt;
  tr.dim = d;
  tr.x.assign((spec.steps + 1) * d, 0.0);
  tr.k.assign((spec.steps + 1) * d, 0.0);
  tr.k_tv.assign(spec.steps + 1, 0.0);

  Point nu(d, 0.0), incr(d), sig_psi(d), jx(d), prop(d), next(d), dk(d);
  MeasureView view;
  for (std::size_t n = 0; n < spec.steps; ++n) {
    const auto x0 = limit.path.state(n);
    view.assign(std::span<const double>(limit.law_points).subspan(n * d, d), d);
    const Matrix grad = spec.coeffs.drift.gradient(x0, view);
    const Matrix sigma = spec.coeffs.diffusion.eval(x0, view);
    matvec(grad, nu, incr);
    matvec(sigma, psi.value(n), sig_psi);
    for (std::size_t j = 0; j < d; ++j) incr[j] = (incr[j] + sig_psi[j]) * dt;

    if (spec.op.is_zero()) {
      for (std::size_t j = 0; j < d; ++j) {
        next[j] = nu[j] + incr[j];
        dk[j] = 0.0;
      }
    } else if (penalized) {
      spec.op.resolvent(spec.alpha, nu, jx);
      out.max_domain_distance = std::max(out.max_domain_distance, domain.distance(nu));
      out.penalization_bound = std::max(out.penalization_bound, distance(nu, jx));
      for (std::size_t j = 0; j < d; ++j) {
        dk[j] = (nu[j] - jx[j]) / spec.alpha * dt;
        next[j] = nu[j] + incr[j] - dk[j];
      }
    } else {
      for (std::size_t j = 0; j < d; ++j) prop[j] = nu[j] + incr[j];
      cone->project(prop, next);
      for (std::size_t j = 0; j < d; ++j) dk[j] = prop[j] - next[j];
    }
    if (!all_finite(next)) throw SimulationAbort("non-finite state", n + 1);
    nu = next;
    double tv2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      tr.k[(n + 1) * d + j] = tr.k[n * d + j] + dk[j];
      tr.x[(n + 1) * d + j] = nu[j];
      tv2 += dk[j] * dk[j];
    }
    tr.k_tv[n + 1] = tr.k_tv[n] + std::sqrt(tv2);
  }
  return out;
}

RateTarget RateTarget::half_space(Point normal, double level) {
  RateTarget t;
  t.kind = Kind::kHalfSpace;
  t.normal = std::move(normal);
  t.level = level;
  return t;
}

RateTarget RateTarget::endpoint_equals(Point g, double tol) {
  RateTarget t;
  t.kind = Kind::kEndpoint;
  t.endpoint = std::move(g);
  t.tol = tol;
  return t;
}

RateTarget RateTarget::tube_exit(double delta) {
  RateTarget t;
  t.kind = Kind::kTubeExit;
  t.delta = delta;
  return t;
}

RateTarget RateTarget::path_match(Trajectory g, double tol) {
  RateTarget t;
  t.kind = Kind::kPathMatch;
  t.path = std::move(g);
  t.tol = tol;
  return t;
}

void RateTarget::validate(std::size_t dim, std::size_t steps) const {
  switch (kind) {
    case Kind::kHalfSpace:
      if (normal.size() != dim || norm(normal) == 0.0) throw ConfigError("target normal must be a nonzero d-vector");
      if (!std::isfinite(level)) throw ConfigError("target level must be finite");
      break;
    case Kind::kEndpoint:
      if (endpoint.size() != dim) throw ConfigError("target endpoint dimension mismatch");
      if (!(tol > 0.0)) throw ConfigError("target tol must be positive");
      break;
    case Kind::kTubeExit:
      if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("target delta must be positive");
      break;
    case Kind::kPathMatch:
      if (path.dim != dim || path.steps() != steps) throw ConfigError("target path does not match the grid");
      if (!(tol > 0.0)) throw ConfigError("target tol must be positive");
      break;
  }
}

namespace {

// Exact sup of the distances, or its log-sum-exp upper bound at temperature tau.
double soft_sup(const std::vector<double>& e, double tau) {
  const double m = *std::max_element(e.begin(), e.end());
  if (tau <= 0.0) return m;
  double s = 0.0;
  for (double v : e) s += std::exp((v - m) / tau);
  return m + tau * std::log(s);
}

}  // namespace

double RateTarget::violation(const Trajectory& y, const Trajectory& limit, double smoothing) const {
  const auto end = y.state(y.steps());
  switch (kind) {
    case Kind::kHalfSpace:
      return std::max(0.0, level - dot(normal, end));
    case Kind::kEndpoint:
      return std::max(0.0, distance(end, endpoint) - tol);
    case Kind::kTubeExit: {
      std::vector<double> e(y.points());
      for (std::size_t n = 0; n < e.size(); ++n) e[n] = distance(y.state(n), limit.state(n));
      return std::max(0.0, delta - soft_sup(e, smoothing));
    }
    case Kind::kPathMatch: {
      std::vector<double> e(y.points());
      for (std::size_t n = 0; n < e.size(); ++n) e[n] = distance(y.state(n), path.state(n));
      return std::max(0.0, soft_sup(e, smoothing) - tol);
    }
  }
  return 0.0;
}

std::string RateTarget::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::kHalfSpace:
      os << "half-space <n, Y(T)> >= " << level;
      break;
    case Kind::kEndpoint:
      os << "endpoint |Y(T) - g| <= " << tol;
      break;
    case Kind::kTubeExit:
      os << "tube exit sup |Y - X0| >= " << delta;
      break;
    case Kind::kPathMatch:
      os << "path match sup |Y - g| <= " << tol;
      break;
  }
  return os.str();
}

void RateProblem::validate() const {
  problem.validate();
  scheme.validate(problem.operator_at(0.0), problem.horizon);
  target.validate(problem.dim(), scheme.steps(problem.horizon));
  if (settings.rounds == 0) throw ConfigError("rate settings: rounds must be at least 1");
  if (!(settings.initial_penalty > 0.0) || !(settings.penalty_growth >= 1.0))
    throw ConfigError("rate settings: penalty must be positive and growing");
  if (!(settings.feasibility_tol > 0.0)) throw ConfigError("rate settings: feasibility_tol must be positive");
}

Objective rate_objective(const SkeletonMap& map, const RateTarget& target, double rho, double smoothing) {
  const double dt = map.horizon() / static_cast<double>(map.steps());
  return [&map, target, rho, smoothing, dt](std::span<const double> h) {
    double s = 0.0;
    for (double v : h) s += v * v;
    const double e = 0.5 * s * dt;
    const double v = target.violation(map.path(h), map.limit().path, smoothing);
    return e + rho * v * v;
  };
}

RateResult minimize_rate(const RateProblem& rp) {
  rp.validate();
  const SkeletonSolution limit = solve_limit_ode(rp.problem, rp.scheme);
  const SkeletonMap map(rp.problem, limit, rp.scheme);
  const std::size_t n = map.steps() * map.dim();
  const auto& st = rp.settings;
  const bool sup_target =
      rp.target.kind == RateTarget::Kind::kTubeExit || rp.target.kind == RateTarget::Kind::kPathMatch;

  const std::size_t starts = 1 + st.random_restarts;
  std::vector<Point> x(starts, Point(n, 0.0));
  std::vector<RateStart> reports(starts);
  reports[0].label = "zero";
  for (std::size_t s = 1; s < starts; ++s) {
    CounterStream(RngSpec{st.seed, 0}, s, StreamPurpose::kOptimizerRestart).normals(0, x[s]);
    for (double& v : x[s]) v *= st.restart_scale;
    reports[s].label = "random-" + std::to_string(s);
  }

  auto run_start = [&](std::size_t s) {
    double rho = st.initial_penalty;
    double tau = sup_target ? 1e-2 : 0.0;
    std::size_t evals = 0;
    for (std::size_t r = 0; r < st.rounds; ++r) {
      LbfgsResult res = lbfgs_minimize(rate_objective(map, rp.target, rho, tau), x[s], st.lbfgs);
      x[s] = std::move(res.x);
      evals += res.evaluations;
      rho *= st.penalty_growth;
      tau /= 10.0;
    }
    const Trajectory y = map.path(x[s]);
    RateStart& rep = reports[s];
    rep.energy = energy(map.grid(x[s]));
    rep.violation = rp.target.violation(y, limit.path);
    rep.feasible = rep.violation <= st.feasibility_tol;
    rep.evaluations = evals;
  };

  if (st.workers > 1 && starts > 1) {
    WorkerPool pool(std::min(st.workers, starts));
    pool.parallel_for(starts, [&](std::size_t b, std::size_t e) {
      for (std::size_t s = b; s < e; ++s) run_start(s);
    });
  } else {
    for (std::size_t s = 0; s < starts; ++s) run_start(s);
  }

  RateResult out;
  out.starts = reports;
  std::size_t best = starts;
  for (std::size_t s = 0; s < starts; ++s) {
    out.evaluations += reports[s].evaluations;
    if (reports[s].feasible && (best == starts || reports[s].energy < reports[best].energy)) best = s;
  }
  if (best == starts) {
    best = 0;
    for (std::size_t s = 1; s < starts; ++s)
      if (reports[s].violation < reports[best].violation) best = s;
  }
  out.h = map.grid(x[best]);
  out.feasible = reports[best].feasible;
  out.violation = reports[best].violation;
  out.rate = out.feasible ? reports[best].energy : std::numeric_limits<double>::infinity();
  out.path = map.solve(out.h);
  return out;
}

}  // namespace mvsde
