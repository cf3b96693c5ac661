#include "mvsde/sde.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <sstream>

#include "engine.hpp"
#include "mvsde/errors.hpp"
#include "mvsde/parallel.hpp"

namespace mvsde {

namespace detail {

std::vector<std::size_t> record_grid(std::size_t steps, std::size_t record_every) {
  std::vector<std::size_t> grid{0};
  if (record_every == 0) {
    if (steps > 0) grid.push_back(steps);
    return grid;
  }
  for (std::size_t n = record_every; n < steps; n += record_every) grid.push_back(n);
  if (steps > 0) grid.push_back(steps);
  return grid;
}

namespace {

class Runner {
 public:
  Runner(const SimulationOptions& options) {
    if (options.pool != nullptr) {
      pool_ = options.pool;
    } else if (options.workers > 1) {
      owned_ = std::make_unique<WorkerPool>(options.workers);
      pool_ = owned_.get();
    }
  }
  void operator()(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    if (pool_ == nullptr || n < 2)
      body(0, n);
    else
      pool_->parallel_for(n, body);
  }

 private:
  std::unique_ptr<WorkerPool> owned_;
  WorkerPool* pool_ = nullptr;
};

}  // namespace

PathEnsemble run_engine(const EngineSpec& spec, const SimulationOptions& options, const ControlGrid* control) {
  if (control == nullptr) control = spec.control;
  const std::size_t d = spec.dim;
  const std::size_t n_part = spec.particles;
  const double dt = spec.dt;
  const double sqrt_dt = std::sqrt(dt);
  const bool penalized = spec.method == SchemeMethod::kYosidaPenalized;
  const bool diagonal = spec.coeffs.diffusion.is_diagonal();
  const bool use_control = control != nullptr && !control->is_zero();
  const bool use_noise = spec.noise_scale != 0.0;
  const bool need_sigma = use_control || use_noise;
  const bool trivial_op = spec.op.is_zero();

  std::optional<ConvexSet> cone;
  if (!penalized) {
    cone = spec.op.as_normal_cone();
    if (!cone) throw ConfigError("projection scheme requires a normal-cone operator");
  }
  const ConvexSet& domain = spec.op.domain();

  PathEnsemble ens;
  ens.dim = d;
  ens.particles = n_part;
  ens.steps = spec.steps;
  ens.dt = dt;
  ens.method = spec.method;
  ens.alpha = spec.alpha;
  ens.rng = spec.rng;
  ens.recorded_steps = record_grid(spec.steps, options.record_every);
  const std::size_t records = ens.records();
  ens.x.assign(n_part * records * d, 0.0);
  ens.k.assign(n_part * records * d, 0.0);
  ens.k_tv.assign(n_part * records, 0.0);

  std::vector<double> states = spec.initial;
  std::vector<double> next(states.size());
  std::vector<double> k_cum(n_part * d, 0.0);
  std::vector<double> tv(n_part, 0.0);
  std::vector<double> dist_max(n_part, 0.0);
  std::vector<double> bound_max(n_part, 0.0);
  std::vector<double> shifted;
  if (spec.law == LawSource::kShifted) shifted.resize(n_part * d);

  for (std::size_t i = 0; i < n_part; ++i)
    std::copy_n(states.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                ens.x.begin() + static_cast<std::ptrdiff_t>(i * records * d));

  Runner runner(options);
  MeasureView view;
  MeasureView limit_view;
  Point limit_b(d);
  std::size_t next_record = 1;

  // Penalized bookkeeping for the state at grid index n: distance to the domain
  // closure and |x - J x| = alpha |A^alpha x|.
  auto penalty_probe = [&](std::size_t i, std::span<const double> x, std::span<double> jx) {
    spec.op.resolvent(spec.alpha, x, jx);
    dist_max[i] = std::max(dist_max[i], domain.distance(x));
    bound_max[i] = std::max(bound_max[i], distance(x, jx));
  };

  for (std::size_t n = 0; n < spec.steps; ++n) {
    const MeasureView* law = nullptr;
    switch (spec.law) {
      case LawSource::kSelf:
        view.assign(states, d);
        law = &view;
        break;
      case LawSource::kFrozen:
        law = &spec.frozen[n];
        break;
      case LawSource::kShifted: {
        const auto x0 = spec.limit->state(n);
        for (std::size_t i = 0; i < n_part; ++i)
          for (std::size_t j = 0; j < d; ++j) shifted[i * d + j] = spec.lambda * states[i * d + j] + x0[j];
        view.assign(shifted, d);
        limit_view.assign(x0, d);
        spec.limit_drift->eval(x0, limit_view, limit_b);
        law = &view;
        break;
      }
    }
    const std::span<const double> h = use_control ? control->value(n) : std::span<const double>{};
    const bool record = next_record < records && ens.recorded_steps[next_record] == n + 1;
    std::atomic<bool> blew_up{false};

    runner(n_part, [&](std::size_t begin, std::size_t end) {
      thread_local std::vector<double> scratch;
      scratch.resize(8 * d + d * d);
      double* buf = scratch.data();
      auto take = [&buf](std::size_t len) {
        std::span<double> s{buf, len};
        buf += len;
        return s;
      };
      const auto drift = take(d), sigma = take(diagonal ? d : d * d), z = take(d), w = take(d), incr = take(d),
                 jx = take(d), prop = take(d), dk = take(d);
      for (std::size_t i = begin; i < end; ++i) {
        const std::span<const double> x{states.data() + i * d, d};
        const std::span<const double> y =
            spec.law == LawSource::kShifted ? std::span<const double>{shifted.data() + i * d, d} : x;
        spec.coeffs.drift.eval(y, *law, drift);
        if (spec.law == LawSource::kShifted)
          for (std::size_t j = 0; j < d; ++j) drift[j] = (drift[j] - limit_b[j]) / spec.lambda;
        for (std::size_t j = 0; j < d; ++j) incr[j] = drift[j] * dt;

        if (need_sigma) {
          if (use_noise) CounterStream(spec.rng, i, StreamPurpose::kDrivingNoise).normals(n, z);
          for (std::size_t j = 0; j < d; ++j) {
            double v = 0.0;
            if (use_control) v += h[j] * dt;
            if (use_noise) v += spec.noise_scale * sqrt_dt * z[j];
            w[j] = v;
          }
          if (diagonal) {
            spec.coeffs.diffusion.eval_diagonal(y, *law, sigma);
            for (std::size_t j = 0; j < d; ++j) incr[j] += sigma[j] * w[j];
          } else {
            spec.coeffs.diffusion.eval(y, *law, sigma);
            for (std::size_t r = 0; r < d; ++r) {
              double s = 0.0;
              for (std::size_t c = 0; c < d; ++c) s += sigma[r * d + c] * w[c];
              incr[r] += s;
            }
          }
        }

        const std::span<double> xn{next.data() + i * d, d};
        if (trivial_op) {
          for (std::size_t j = 0; j < d; ++j) {
            xn[j] = x[j] + incr[j];
            dk[j] = 0.0;
          }
        } else if (penalized) {
          penalty_probe(i, x, jx);
          for (std::size_t j = 0; j < d; ++j) {
            dk[j] = (x[j] - jx[j]) / spec.alpha * dt;
            xn[j] = x[j] + incr[j] - dk[j];
          }
        } else {
          for (std::size_t j = 0; j < d; ++j) prop[j] = x[j] + incr[j];
          cone->project(prop, xn);
          for (std::size_t j = 0; j < d; ++j) dk[j] = prop[j] - xn[j];
        }

        double step_tv = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          k_cum[i * d + j] += dk[j];
          step_tv += dk[j] * dk[j];
        }
        tv[i] += std::sqrt(step_tv);
        if (!all_finite(xn)) blew_up.store(true, std::memory_order_relaxed);

        if (record) {
          const std::size_t base = i * records + next_record;
          std::copy(xn.begin(), xn.end(), ens.x.begin() + static_cast<std::ptrdiff_t>(base * d));
          std::copy_n(k_cum.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                      ens.k.begin() + static_cast<std::ptrdiff_t>(base * d));
          ens.k_tv[base] = tv[i];
        }
      }
    });

    if (blew_up.load()) throw SimulationAbort("non-finite state", n + 1);
    if (record) ++next_record;
    states.swap(next);
    if (options.observer) options.observer(n + 1, states);
  }

  if (penalized && !trivial_op) {
    runner(n_part, [&](std::size_t begin, std::size_t end) {
      std::vector<double> jx(d);
      for (std::size_t i = begin; i < end; ++i) penalty_probe(i, {states.data() + i * d, d}, jx);
    });
    for (std::size_t i = 0; i < n_part; ++i) {
      ens.max_domain_distance = std::max(ens.max_domain_distance, dist_max[i]);
      ens.penalization_bound = std::max(ens.penalization_bound, bound_max[i]);
    }
  }
  return ens;
}

}  // namespace detail

std::string to_string(SchemeMethod m) {
  return m == SchemeMethod::kProjection ? "projection" : "yosida-penalized";
}

void SdeProblem::validate() const {
  const std::size_t d = dim();
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon must be positive and finite");
  if (!(eps >= 0.0 && eps <= 1.0)) throw ConfigError("eps must lie in [0, 1]");
  if (coeffs.dim() != d) throw ConfigError("coefficient dimension does not match the operator");
  const MonotoneOperator a = operator_at(eps);
  if (a.dim() != d) throw ConfigError("operator family changes dimension");
  if (initial_cloud) {
    if (initial_cloud->dim() != d) throw ConfigError("initial cloud dimension mismatch");
    for (std::size_t i = 0; i < initial_cloud->size(); ++i)
      if (!(a.domain().distance(initial_cloud->point(i)) <= 1e-12))
        throw ConfigError("initial cloud point outside the domain closure");
    return;
  }
  if (x0.size() != d) throw ConfigError("x0 dimension mismatch");
  if (!all_finite(x0)) throw ConfigError("x0 must be finite");
  if (!(a.domain().distance(x0) <= 1e-12)) throw ConfigError("x0 lies outside the domain closure");
}

std::size_t SchemeSpec::steps(double horizon) const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
  const double ratio = horizon / dt;
  const double n = std::round(ratio);
  if (n < 1.0 || std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio))
    throw ConfigError("horizon / dt must be an integer");
  return static_cast<std::size_t>(n);
}

void SchemeSpec::validate(const MonotoneOperator& op, double horizon) const {
  steps(horizon);
  if (alpha && (!(*alpha > 0.0) || !std::isfinite(*alpha))) throw ConfigError("alpha must be positive");
  if (method == SchemeMethod::kProjection && !op.as_normal_cone())
    throw ConfigError("projection scheme requires a normal-cone operator, got " + op.describe());
}

EmpiricalMeasure PathEnsemble::terminal_measure() const {
  std::vector<double> pts(particles * dim);
  for (std::size_t i = 0; i < particles; ++i) {
    const auto s = terminal(i);
    std::copy(s.begin(), s.end(), pts.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return {dim, std::move(pts)};
}

Trajectory PathEnsemble::trajectory(std::size_t i) const {
  if (!records_every_step()) throw ConfigError("trajectory requires every step to be recorded");
  Trajectory t;
  t.dt = dt;
  t.dim = dim;
  const auto first = static_cast<std::ptrdiff_t>(i * records() * dim);
  const auto last = first + static_cast<std::ptrdiff_t>(records() * dim);
  t.x.assign(x.begin() + first, x.begin() + last);
  t.k.assign(k.begin() + first, k.begin() + last);
  t.k_tv.assign(k_tv.begin() + static_cast<std::ptrdiff_t>(i * records()),
                k_tv.begin() + static_cast<std::ptrdiff_t>((i + 1) * records()));
  return t;
}

std::vector<EmpiricalMeasure> law_path(const PathEnsemble& ensemble) {
  if (!ensemble.records_every_step()) throw ConfigError("law_path requires every step to be recorded");
  std::vector<EmpiricalMeasure> laws;
  laws.reserve(ensemble.records());
  for (std::size_t r = 0; r < ensemble.records(); ++r) {
    std::vector<double> pts(ensemble.particles * ensemble.dim);
    for (std::size_t i = 0; i < ensemble.particles; ++i) {
      const auto s = ensemble.state(i, r);
      std::copy(s.begin(), s.end(), pts.begin() + static_cast<std::ptrdiff_t>(i * ensemble.dim));
    }
    laws.emplace_back(ensemble.dim, std::move(pts));
  }
  return laws;
}

namespace {

std::vector<double> initial_states(const SdeProblem& problem, std::size_t particles) {
  const std::size_t d = problem.dim();
  if (problem.initial_cloud) {
    if (problem.initial_cloud->size() != particles)
      throw ConfigError("initial cloud size must equal the particle count");
    const auto data = problem.initial_cloud->data();
    return {data.begin(), data.end()};
  }
  std::vector<double> out(particles * d);
  for (std::size_t i = 0; i < particles; ++i)
    std::copy(problem.x0.begin(), problem.x0.end(), out.begin() + static_cast<std::ptrdiff_t>(i * d));
  return out;
}

detail::EngineSpec base_spec(const SdeProblem& problem, const SchemeSpec& scheme, std::size_t particles,
                             const RngSpec& rng) {
  problem.validate();
  if (particles == 0) throw ConfigError("particle count must be at least 1");
  detail::EngineSpec spec;
  spec.op = problem.operator_at(problem.eps);
  scheme.validate(spec.op, problem.horizon);
  spec.dim = problem.dim();
  spec.particles = particles;
  spec.steps = scheme.steps(problem.horizon);
  spec.dt = problem.horizon / static_cast<double>(spec.steps);
  spec.method = scheme.method;
  spec.alpha = scheme.alpha_value();
  spec.coeffs = problem.coeffs.at(problem.eps);
  spec.noise_scale = std::sqrt(problem.eps);
  spec.rng = rng;
  return spec;
}

void check_control(const ControlGrid& control, const detail::EngineSpec& spec) {
  if (control.steps() != spec.steps || control.dim() != spec.dim ||
      std::abs(control.dt() - spec.dt) > 1e-12 * spec.dt)
    throw ConfigError("control grid does not match the scheme grid");
}

}  // namespace

PathEnsemble simulate(const SdeProblem& problem, const SchemeSpec& scheme, std::size_t particles,
                      const RngSpec& rng, const SimulationOptions& options) {
  detail::EngineSpec spec = base_spec(problem, scheme, particles, rng);
  spec.initial = initial_states(problem, particles);
  return detail::run_engine(spec, options);
}

PathEnsemble simulate_controlled(const SdeProblem& problem, const std::vector<EmpiricalMeasure>& frozen_law,
                                 const ControlGrid& control, const SchemeSpec& scheme, std::size_t particles,
                                 const RngSpec& rng, const SimulationOptions& options) {
  detail::EngineSpec spec = base_spec(problem, scheme, particles, rng);
  check_control(control, spec);
  if (frozen_law.size() != spec.steps && frozen_law.size() != spec.steps + 1)
    throw ConfigError("frozen law must hold one measure per grid step");
  std::vector<MeasureView> views;
  views.reserve(frozen_law.size());
  for (const auto& mu : frozen_law) {
    if (mu.dim() != spec.dim) throw ConfigError("frozen law dimension mismatch");
    views.push_back(MeasureView::of(mu));
  }
  spec.law = detail::LawSource::kFrozen;
  spec.frozen = views;
  spec.control = &control;
  spec.initial = initial_states(problem, particles);
  return detail::run_engine(spec, options);
}

LambdaRule power_lambda(double exponent) {
  return [exponent](double eps) { return std::pow(eps, exponent); };
}

ScalingCheck check_mdp_scaling(const LambdaRule& lambda, const std::vector<double>& eps_grid) {
  ScalingCheck out;
  std::vector<double> grid = eps_grid;
  std::sort(grid.begin(), grid.end(), std::greater<>());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.empty()) return out;
  if (grid.size() == 1) grid.push_back(grid.front() / 10.0);
  std::ostringstream msg;
  double prev_lambda = 0.0, prev_speed = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double e = grid[k];
    const double l = lambda(e);
    if (!(e > 0.0) || !(l > 0.0) || !std::isfinite(l)) {
      out.ok = false;
      msg << "lambda(" << e << ") = " << l << " is not positive; ";
      continue;
    }
    const double speed = e / (l * l);
    if (k > 0 && !(l < prev_lambda)) {
      out.ok = false;
      msg << "lambda does not decrease at eps = " << e << "; ";
    }
    if (k > 0 && !(speed < prev_speed)) {
      out.ok = false;
      msg << "eps / lambda^2 does not decrease at eps = " << e << "; ";
    }
    prev_lambda = l;
    prev_speed = speed;
  }
  if (out.ok && !(prev_lambda < 1.0 && prev_speed < 1.0)) {
    out.ok = false;
    msg << "lambda or eps / lambda^2 is not below 1 at the smallest eps; ";
  }
  out.message = msg.str();
  return out;
}

PathEnsemble simulate_mdp(const SdeProblem& problem, const MdpSpec& mdp, const SchemeSpec& scheme,
                          std::size_t particles, const RngSpec& rng, const SimulationOptions& options) {
  detail::EngineSpec spec = base_spec(problem, scheme, particles, rng);
  if (!(problem.eps > 0.0)) throw ConfigError("MDP simulation needs eps > 0");
  const double lambda = mdp.lambda(problem.eps);
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda(eps) must be positive");
  const Trajectory& limit = mdp.limit_path;
  if (limit.dim != spec.dim || limit.steps() != spec.steps || std::abs(limit.dt - spec.dt) > 1e-12 * spec.dt)
    throw ConfigError("limit path does not match the scheme grid");
  if (mdp.control) check_control(*mdp.control, spec);

  spec.law = detail::LawSource::kShifted;
  spec.lambda = lambda;
  spec.limit = &limit;
  spec.limit_drift = &problem.coeffs.base().drift;
  spec.noise_scale = std::sqrt(problem.eps) / lambda;
  spec.control = mdp.control ? &*mdp.control : nullptr;
  spec.initial.assign(particles * spec.dim, 0.0);

  const ScalingCheck scaling = check_mdp_scaling(mdp.lambda, {problem.eps});
  PathEnsemble ens = detail::run_engine(spec, options);
  if (!scaling.ok) ens.warnings.push_back("MDP scaling condition fails: " + scaling.message);
  return ens;
}

MonotonicityReport k_monotonicity_diag(const PathEnsemble& ensemble, const std::vector<GraphSample>& graph) {
  MonotonicityReport rep;
  if (!ensemble.records_every_step()) {
    rep.applicable = false;
    rep.note = "ensemble does not record every step";
    return rep;
  }
  const std::size_t d = ensemble.dim;
  const double dt = ensemble.dt;
  const bool penalized = ensemble.method == SchemeMethod::kYosidaPenalized;
  const double ratio = penalized ? ensemble.alpha / dt : 0.0;
  std::vector<double> dk(d), p(d);
  for (std::size_t i = 0; i < ensemble.particles; ++i) {
    for (std::size_t g = 0; g < graph.size(); ++g) {
      const Point& gx = graph[g].x;
      const Point& gy = graph[g].y;
      double sum = 0.0;
      double reach = 0.0;
      for (std::size_t n = 0; n < ensemble.steps; ++n) {
        const auto k0 = ensemble.reaction(i, n);
        const auto k1 = ensemble.reaction(i, n + 1);
        for (std::size_t j = 0; j < d; ++j) dk[j] = k1[j] - k0[j];
        // The point where dK / dt is a section of A: the projected state, or J^alpha X_n.
        const auto xs = penalized ? ensemble.state(i, n) : ensemble.state(i, n + 1);
        for (std::size_t j = 0; j < d; ++j) p[j] = penalized ? xs[j] - ratio * dk[j] : xs[j];
        double term = 0.0;
        for (std::size_t j = 0; j < d; ++j) term += (p[j] - gx[j]) * (dk[j] - gy[j] * dt);
        sum += term;
        reach = std::max(reach, distance(p, gx));
      }
      const double tol = dt * (1.0 + reach) * (1.0 + norm(gy));
      const double margin = sum + tol;
      if (sum < -tol) ++rep.violations;
      if (margin < rep.worst_margin) {
        rep.worst_margin = margin;
        rep.worst_sum = sum;
        rep.tolerance = tol;
        rep.worst_particle = i;
        rep.worst_graph_sample = g;
      }
    }
  }
  return rep;
}

}  // namespace mvsde
