// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mvsde/asymptotics.hpp"
#include "mvsde/monotone.hpp"
#include "mvsde/parallel.hpp"
#include "mvsde/sde.hpp"
#include "mvsde/variational.hpp"
#include "oracles.hpp"
#include "property_suite.hpp"

using namespace mvsde;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::vector<std::string> info;
};

std::size_t thread_count() { return std::max<std::size_t>(1, std::thread::hardware_concurrency()); }

SimulationOptions fast_options(WorkerPool& pool) {
  SimulationOptions o;
  o.record_every = 0;
  o.pool = &pool;
  return o;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

void operator_exactness(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> alphas = {1.0, 0.1, 0.01};
  std::vector<double> grid(1000);
  for (std::size_t k = 0; k < grid.size(); ++k) grid[k] = -5.0 + 10.0 * static_cast<double>(k) / 999.0;

  double worst = 0.0;
  auto track = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };

  const auto zero = MonotoneOperator::zero(1);
  const auto zero_fn = ConvexFn::quadratic(Matrix(1, 1));
  const auto abs = MonotoneOperator::subdifferential(ConvexFn::abs_norm(1));
  const auto abs_fn = ConvexFn::abs_norm(1);
  const auto half = MonotoneOperator::normal_cone(ConvexSet::box({0.0}, {kInf}));
  const auto half_fn = ConvexFn::indicator(ConvexSet::box({0.0}, {kInf}));
  for (double a : alphas) {
    for (double x : grid) {
      const Point p{x};
      track(resolvent(zero, a, p)[0], x);
      track(yosida(zero, a, p)[0], 0.0);
      track(moreau_envelope(zero_fn, a, p), 0.0);

      const double soft = std::copysign(std::max(std::abs(x) - a, 0.0), x);
      track(resolvent(abs, a, p)[0], soft);
      track(yosida(abs, a, p)[0], std::clamp(x / a, -1.0, 1.0));
      track(moreau_envelope(abs_fn, a, p), std::abs(x) <= a ? x * x / (2 * a) : std::abs(x) - a / 2);

      track(resolvent(half, a, p)[0], std::max(x, 0.0));
      track(yosida(half, a, p)[0], std::min(x, 0.0) / a);
      track(moreau_envelope(half_fn, a, p), x < 0 ? x * x / (2 * a) : 0.0);
    }
  }

  // Box [-1, 1] x [0, 2] on a 40 x 25 grid of [-3, 3] x [-2, 4].
  const Point lo{-1.0, 0.0}, hi{1.0, 2.0};
  const auto box = MonotoneOperator::normal_cone(ConvexSet::box(lo, hi));
  const auto box_fn = ConvexFn::indicator(ConvexSet::box(lo, hi));
  for (double a : alphas) {
    for (std::size_t i = 0; i < 40; ++i) {
      for (std::size_t j = 0; j < 25; ++j) {
        const Point p{-3.0 + 6.0 * static_cast<double>(i) / 39.0, -2.0 + 6.0 * static_cast<double>(j) / 24.0};
        const Point jx = resolvent(box, a, p), y = yosida(box, a, p);
        double d2 = 0.0;
        for (std::size_t c = 0; c < 2; ++c) {
          const double proj = std::clamp(p[c], lo[c], hi[c]);
          track(jx[c], proj);
          track(y[c], (p[c] - proj) / a);
          d2 += (p[c] - proj) * (p[c] - proj);
        }
        track(moreau_envelope(box_fn, a, p), d2 / (2 * a));
      }
    }
  }
  const double elapsed = seconds_since(t0);
  o.pass = worst <= 1e-12 && elapsed < 1.0;
  o.detail << "max error " << worst << " (tol 1e-12), runtime " << elapsed << " s (limit 1 s)";
}

// ---------------------------------------------------------------------------

void reflected_bm(Outcome& o, WorkerPool& pool) {
  SdeProblem p;
  p.op = MonotoneOperator::normal_cone(ConvexSet::box({0.0}, {kInf}));
  const std::size_t n = 100000;
  const PathEnsemble e =
      simulate(p, SchemeSpec{SchemeMethod::kProjection, 1e-3, std::nullopt}, n, RngSpec{20261017, 0}, fast_options(pool));
  for (double a : {0.5, 1.0, 2.0}) {
    std::size_t below = 0;
    for (std::size_t i = 0; i < n; ++i) below += e.terminal(i)[0] <= a ? 1 : 0;
    const double f = static_cast<double>(below) / static_cast<double>(n);
    const double exact = oracle::reflected_bm_cdf(a);
    const double se = std::sqrt(exact * (1 - exact) / static_cast<double>(n));
    const double z = (f - exact) / se;
    o.pass = o.pass && std::abs(z) <= 3.0;
    o.detail << "a=" << a << ": F=" << f << " vs " << exact << " (z=" << z << ") ";
    // Grid-monitored reflection sits about beta sqrt(dt) below the continuous one.
    const double beta = 0.5825971579390106;
    const double shifted = oracle::reflected_bm_cdf(a + beta * std::sqrt(1e-3));
    std::ostringstream s;
    s << "a=" << a << ": discrete-monitoring corrected oracle " << shifted << ", z="
      << (f - shifted) / std::sqrt(shifted * (1 - shifted) / static_cast<double>(n)) << " (diagnostic, not gated)";
    o.info.push_back(s.str());
  }
  o.detail << "[tol 3 SE]";
}

// ---------------------------------------------------------------------------

SdeProblem mean_field_ou() {
  SdeProblem p;
  p.coeffs = PerturbationFamily::constant({Drift::affine({0.0}, Matrix(1, 1, std::vector<double>{-1.0}),
                                                         Matrix(1, 1, std::vector<double>{0.5})),
                                           Diffusion::scalar(1, 0.5)});
  p.x0 = {1.0};
  return p;
}

void mean_ode(Outcome& o, WorkerPool& pool) {
  const SdeProblem p = mean_field_ou();
  const double exact = std::exp(-0.5);
  const std::size_t n = 10000;
  const PathEnsemble e =
      simulate(p, SchemeSpec{SchemeMethod::kProjection, 1e-3, std::nullopt}, n, RngSpec{31, 0}, fast_options(pool));
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = e.terminal(i)[0];
  const double mean = sample_mean(t);
  const double se = std::sqrt(sample_variance(t) / static_cast<double>(n));
  const double z = (mean - exact) / se;

  std::vector<double> bias;
  std::ostringstream chain;
  for (double dt : {0.04, 0.02, 0.01, 0.005}) {
    SdeProblem q = p;
    q.eps = 0.0;
    const auto lim = solve_limit_ode(q, SchemeSpec{SchemeMethod::kProjection, dt, std::nullopt});
    bias.push_back(std::abs(lim.path.state(lim.path.steps())[0] - exact));
    chain << " dt=" << dt << ":" << bias.back();
  }
  bool halves = true;
  for (std::size_t k = 1; k < bias.size(); ++k) halves = halves && bias[k] <= 0.5 * bias[k - 1];
  o.pass = std::abs(z) <= 3.0 && halves;
  o.detail << "mean " << mean << " vs " << exact << " (z=" << z << ", tol 3 SE); eps=0 bias" << chain.str()
           << (halves ? " halves" : " does NOT halve") << " per halving";
}

// ---------------------------------------------------------------------------

RateResult run_rate(const SdeProblem& p, const RateTarget& t, double dt, std::size_t workers) {
  RateProblem rp;
  rp.problem = p;
  rp.target = t;
  rp.scheme = SchemeSpec{SchemeMethod::kProjection, dt, std::nullopt};
  rp.settings.seed = 4;
  rp.settings.workers = workers;
  return minimize_rate(rp);
}

void rate_oracle(Outcome& o) {
  for (double a : {0.5, 1.0, 2.0}) {
    const RateResult r = run_rate(SdeProblem{}, RateTarget::half_space({1.0}, a), 0.01, thread_count());
    const double want = a * a / 2;
    const double rel = std::abs(r.rate - want) / want;
    o.pass = o.pass && r.feasible && rel <= 0.02;
    o.detail << "a=" << a << ": I*=" << r.rate << " (rel " << rel << ") ";
  }
  SdeProblem p;
  p.op = MonotoneOperator::normal_cone(ConvexSet::box({0.0}, {kInf}));
  p.x0 = {0.5};
  const RateResult r = run_rate(p, RateTarget::tube_exit(0.25), 0.01, thread_count());
  const auto ramp = oracle::reflected_tube_exit_ramp_search(0.5, 0.25, 1.0, 100);
  const double rel = std::abs(r.rate - ramp.rate) / ramp.rate;
  o.pass = o.pass && r.feasible && rel <= 0.05;
  o.detail << "tube exit: I*=" << r.rate << " vs ramp " << ramp.rate << " (rel " << rel << ") [tol 2% / 5%]";
}

// ---------------------------------------------------------------------------

void ldp_consistency(Outcome& o, WorkerPool& pool) {
  const double a = 1.0;
  const LdpTable t = ldp_sweep(SdeProblem{}, RareEvent::half_space({1.0}, a), {0.25, 0.1}, 1000000,
                               SchemeSpec{SchemeMethod::kProjection, 0.01, std::nullopt}, RngSpec{55, 0},
                               fast_options(pool));
  for (const auto& row : t.rows) {
    const double exact = oracle::gaussian_ldp_rate(row.eps, a);
    const bool inside = row.usable && row.rate_low <= exact && exact <= row.rate_high;
    o.pass = o.pass && inside;
    o.detail << "eps=" << row.eps << ": hits " << row.hits << ", rate " << row.rate << " in [" << row.rate_low << ", "
             << row.rate_high << "] vs exact " << exact << (inside ? "" : " OUTSIDE") << "; ";
  }
  const RateFit fit = fit_rate(t, a * a / 2);
  o.pass = o.pass && fit.verdict == "consistent";
  o.detail << "gaps to I*=" << a * a / 2 << ":";
  for (double g : fit.gaps) o.detail << " " << g;
  o.detail << " (" << fit.verdict << ")";
}

// ---------------------------------------------------------------------------

void mdp_variance(Outcome& o, WorkerPool& pool) {
  SdeProblem p;
  p.coeffs = PerturbationFamily::constant(
      {Drift::affine({0.0}, Matrix(1, 1, std::vector<double>{-1.0}), Matrix(1, 1)), Diffusion::scalar(1, 1.0)});
  const MdpTable t = mdp_sweep(p, power_lambda(0.25), {1e-4}, MdpSettings{}, 10000,
                               SchemeSpec{SchemeMethod::kProjection, 1e-3, std::nullopt}, RngSpec{66, 0},
                               fast_options(pool));
  const double exact = oracle::ou_variance(1.0);
  const double rel = std::abs(t.rows.at(0).value - exact) / exact;
  o.pass = rel <= 0.05;
  o.detail << "Var=" << t.rows[0].value << " vs " << exact << " (rel " << rel << ", tol 5%; library oracle "
           << t.oracle << " via " << t.oracle_method << ")";
}

// ---------------------------------------------------------------------------

Trajectory grid_path(std::size_t steps, const std::function<double(double)>& velocity) {
  Trajectory q;
  q.dim = 1;
  q.dt = 1.0 / static_cast<double>(steps);
  q.x.assign(steps + 1, 0.0);
  for (std::size_t n = 0; n < steps; ++n) q.x[n + 1] = q.x[n] + velocity(static_cast<double>(n) * q.dt) * q.dt;
  q.k.assign(steps + 1, 0.0);
  q.k_tv.assign(steps + 1, 0.0);
  return q;
}

void lil_pipeline(Outcome& o, WorkerPool& pool) {
  const SdeProblem bm;
  LilSpec spec;
  spec.j_min = 4;
  spec.j_max = 8;
  spec.steps = 100;
  LilHarnessSettings hs;
  hs.paths = 10000;
  hs.distance_paths = 4;
  const LilReport rep =
      lil_harness(bm, spec, ContractionFamily::radial({0.0}), hs, RngSpec{77, 0}, SchemeMethod::kProjection,
                  fast_options(pool));
  for (const auto& row : rep.rows) {
    if (row.j != 4 && row.j != 8) {
      std::ostringstream s;
      s << "j=" << row.j << ": Var=" << row.var_q1 << " vs " << row.var_oracle << " (z=" << row.z_score << ")";
      o.info.push_back(s.str());
      continue;
    }
    const bool ok = std::abs(row.var_q1 - 1.0 / row.loglog) <= 3.0 * row.var_std_error;
    o.pass = o.pass && ok;
    o.detail << "u=e^" << row.j << ": Var=" << row.var_q1 << " vs " << 1.0 / row.loglog << " (z=" << row.z_score
             << "); ";
  }
  for (const auto& row : rep.rows) {
    std::ostringstream s;
    s << "j=" << row.j << ": d(Q, Lambda) quantiles 10/50/90% =";
    for (double d : row.distance_quantiles) s << " " << d;
    s << " (reported, not gated)";
    o.info.push_back(s.str());
  }

  // Members of the unit-energy set, built on the skeleton's own grid.
  const std::vector<std::pair<std::string, Trajectory>> members = {
      {"zero", grid_path(50, [](double) { return 0.0; })},
      {"t", grid_path(50, [](double) { return 1.0; })},
      {"sqrt2 t", grid_path(50, [](double) { return std::sqrt(2.0); })},
      {"sine", grid_path(50, [](double t) { return 1.2 * std::cos(3.0 * t); })},
  };
  double worst = 0.0;
  for (const auto& [name, q] : members) {
    const auto d = limit_set_distance(q, bm);
    worst = std::max(worst, d.distance);
  }
  o.pass = o.pass && worst <= 1e-3;
  o.detail << "max member distance " << worst << " (tol 1e-3); ";

  const auto ramp = limit_set_distance(grid_path(50, [](double) { return 2.0; }), bm);
  const double want = 2.0 - std::sqrt(2.0);
  const double rel = std::abs(ramp.distance - want) / want;
  o.pass = o.pass && rel <= 0.03;
  o.detail << "ramp 2t distance " << ramp.distance << " vs " << want << " (rel " << rel << ", tol 3%)";
}

// ---------------------------------------------------------------------------

void property_suites(Outcome& o) {
  const props::Results all = props::all(20261017);
  std::size_t failed = 0;
  for (const auto& r : all) {
    if (!r.ok) {
      ++failed;
      o.info.push_back("FAILED " + r.module + ": " + r.name + " -- " + r.detail);
    }
  }
  o.pass = failed == 0;
  o.detail << all.size() - failed << "/" << all.size() << " properties green (determinism across 1, 4, 16 workers included)";
}

}  // namespace

int main() {
  WorkerPool pool(thread_count());
  struct Criterion {
    int id;
    std::string name;
    std::function<void(Outcome&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "operator exactness", operator_exactness},
      {2, "reflected Brownian motion CDF", [&](Outcome& o) { reflected_bm(o, pool); }},
      {3, "mean-field mean ODE", [&](Outcome& o) { mean_ode(o, pool); }},
      {4, "rate function oracle", rate_oracle},
      {5, "LDP consistency", [&](Outcome& o) { ldp_consistency(o, pool); }},
      {6, "MDP variance", [&](Outcome& o) { mdp_variance(o, pool); }},
      {7, "LIL pipeline", [&](Outcome& o) { lil_pipeline(o, pool); }},
      {8, "property suites", property_suites},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    const double dt = seconds_since(t0);
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail.str()
              << " [" << dt << " s]" << std::endl;
    for (const auto& line : o.info) std::cout << "    " << line << "\n";
    failures += o.pass ? 0 : 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
