#include "property_suite.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "mvsde/asymptotics.hpp"
#include "mvsde/cli/commands.hpp"
#include "mvsde/cli/config.hpp"
#include "mvsde/coeffs.hpp"
#include "mvsde/errors.hpp"
#include "mvsde/measure.hpp"
#include "mvsde/monotone.hpp"
#include "mvsde/optimize.hpp"
#include "mvsde/sde.hpp"
#include "mvsde/variational.hpp"

using namespace mvsde;

namespace props {

namespace {

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : gen_(seed) {}
  double normal(double s = 1.0) { return s * std::normal_distribution<double>(0.0, 1.0)(gen_); }
  double uniform(double a = 0.0, double b = 1.0) { return std::uniform_real_distribution<double>(a, b)(gen_); }
  Point point(std::size_t d, double s = 1.0) {
    Point p(d);
    for (double& v : p) v = normal(s);
    return p;
  }
  std::vector<double> cloud(std::size_t n, std::size_t d, double s = 1.0) {
    std::vector<double> v(n * d);
    for (double& x : v) x = normal(s);
    return v;
  }

 private:
  std::mt19937_64 gen_;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

Result make(const std::string& module, const std::string& name, bool ok, const std::string& detail) {
  return {module, name, ok, detail};
}

Point sub(std::span<const double> a, std::span<const double> b) {
  Point r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

struct NamedOp {
  std::string name;
  MonotoneOperator op;
  double slack;  // 1e-12 closed form, 1e-10 iterative
};

std::vector<NamedOp> operator_catalogue() {
  const double inf = std::numeric_limits<double>::infinity();
  MonotoneGraph1D g;
  g.knots = {{-1.0, -1.0, -0.5}, {1.0, 0.5, 2.0}};
  g.left_slope = 0.5;
  g.right_slope = 1.0;
  MonotoneGraph1D bounded;
  bounded.knots = {{0.0, -1.0, 0.0}, {2.0, 1.0, 1.0}};
  bounded.bounded_left = true;
  bounded.right_slope = 0.0;
  return {
      {"zero-2d", MonotoneOperator::zero(2), 1e-12},
      {"cone-halfline", MonotoneOperator::normal_cone(ConvexSet::box({0.0}, {inf})), 1e-12},
      {"cone-box", MonotoneOperator::normal_cone(ConvexSet::box({0.0, -1.0}, {inf, 1.0})), 1e-12},
      {"cone-ball", MonotoneOperator::normal_cone(ConvexSet::ball({0.5, 0.0}, 1.5)), 1e-12},
      {"cone-halfspace", MonotoneOperator::normal_cone(ConvexSet::half_space({1.0, 1.0}, 1.0)), 1e-12},
      {"cone-polyhedron",
       MonotoneOperator::normal_cone(ConvexSet::polyhedron(
           {{{1.0, 0.0}, 1.0}, {{0.0, 1.0}, 1.0}, {{-1.0, -1.0}, 1.0}}, {0.0, 0.0})),
       1e-10},
      {"subdiff-abs-1d", MonotoneOperator::subdifferential(ConvexFn::abs_norm(1)), 1e-12},
      {"subdiff-abs-2d", MonotoneOperator::subdifferential(ConvexFn::abs_norm(2, 0.7)), 1e-12},
      {"subdiff-quadratic",
       MonotoneOperator::subdifferential(ConvexFn::quadratic(Matrix(2, 2, std::vector<double>{2.0, 0.5, 0.5, 1.0}))),
       1e-12},
      {"subdiff-sum-1d",
       MonotoneOperator::subdifferential(
           ConvexFn::sum({ConvexFn::abs_norm(1), ConvexFn::quadratic(Matrix(1, 1, std::vector<double>{0.5}))})),
       1e-10},
      {"graph1d", MonotoneOperator::graph1d(g), 1e-10},
      {"graph1d-bounded", MonotoneOperator::graph1d(bounded), 1e-10},
      {"scaled", MonotoneOperator::scaled(MonotoneOperator::subdifferential(ConvexFn::abs_norm(2)), 2.5), 1e-12},
      {"translated",
       MonotoneOperator::translated(MonotoneOperator::normal_cone(ConvexSet::box({0.0, 0.0}, {inf, inf})),
                                    {-0.5, 0.25}),
       1e-12},
  };
}

const std::vector<double> kAlphas = {10.0, 1.0, 0.5, 0.1, 0.01};

}  // namespace

// ---------------------------------------------------------------------------

Results monotone(std::uint64_t seed) {
  Results out;
  Sampler s(seed);
  const auto ops = operator_catalogue();
  const std::size_t pairs = 200;

  double worst_lip = -1e300, worst_ylip = -1e300, worst_ymono = -1e300, worst_graph = 0.0, worst_pair = -1e300;
  std::string where_lip, where_y, where_graph, where_pair;
  for (const auto& [name, op, slack] : ops) {
    const std::size_t d = op.dim();
    for (std::size_t k = 0; k < pairs; ++k) {
      const Point x = s.point(d, 3.0), y = s.point(d, 3.0);
      const double alpha = kAlphas[k % kAlphas.size()];
      const Point jx = resolvent(op, alpha, x), jy = resolvent(op, alpha, y);
      const double lip = distance(jx, jy) - distance(x, y) - slack;
      if (lip > worst_lip) worst_lip = lip, where_lip = name;
      const Point ax = yosida(op, alpha, x), ay = yosida(op, alpha, y);
      const double ylip = distance(ax, ay) - (distance(x, y) + slack) / alpha;
      if (ylip > worst_ylip) worst_ylip = ylip, where_y = name;
      const double mono = -dot(sub(ax, ay), sub(x, y)) - slack * (1.0 + norm(x) + norm(y));
      if (mono > worst_ymono) worst_ymono = mono, where_y = name;
      // (J x, A^alpha x) are graph points; sampled monotonicity of A itself.
      const double pair = -dot(sub(jx, jy), sub(ax, ay)) - slack * (1.0 + norm(ax) + norm(ay));
      if (pair > worst_pair) worst_pair = pair, where_pair = name;
      if (op.kind() == MonotoneOperator::Kind::kGraph1D || op.kind() == MonotoneOperator::Kind::kSubdifferential) {
        if (!op.graph_contains(jx, ax, 1e-10)) {
          worst_graph = std::max(worst_graph, 1.0);
          where_graph = name;
        }
      }
    }
  }
  out.push_back(make("monotone", "resolvent is nonexpansive", worst_lip <= 0.0,
                     "worst excess " + fmt(worst_lip) + " (" + where_lip + ")"));
  out.push_back(make("monotone", "yosida is (1/alpha)-Lipschitz and monotone", worst_ylip <= 0.0 && worst_ymono <= 0.0,
                     "lipschitz excess " + fmt(worst_ylip) + ", monotonicity defect " + fmt(worst_ymono) + " (" +
                         where_y + ")"));
  out.push_back(make("monotone", "sampled graph pairs are monotone", worst_pair <= 0.0,
                     "worst defect " + fmt(worst_pair) + " (" + where_pair + ")"));
  out.push_back(make("monotone", "yosida value lies in A(J x)", worst_graph == 0.0,
                     worst_graph == 0.0 ? "all samples in graph" : "miss in " + where_graph));

  // |A^alpha x| nondecreasing as alpha decreases, bounded by |A^0 x|.
  double worst_norm = -1e300;
  std::string where_norm;
  for (const auto& [name, op, slack] : ops) {
    const std::size_t d = op.dim();
    for (std::size_t k = 0; k < 100; ++k) {
      Point x = op.domain().project(s.point(d, 2.0));
      if (!op.in_domain(x)) continue;
      const double a0 = norm(minimal_section(op, x));
      double prev = 0.0;
      for (double alpha : kAlphas) {
        const double v = norm(yosida(op, alpha, x));
        const double excess = std::max(prev - v, v - a0) - 1e-9 * (1.0 + a0);
        if (excess > worst_norm) worst_norm = excess, where_norm = name;
        prev = v;
      }
    }
  }
  out.push_back(make("monotone", "yosida norm increases toward the minimal section", worst_norm <= 0.0,
                     "worst excess " + fmt(worst_norm) + " (" + where_norm + ")"));

  // Moreau envelope: below f and nondecreasing as alpha decreases.
  const std::vector<std::pair<std::string, ConvexFn>> fns = {
      {"abs", ConvexFn::abs_norm(1)},
      {"abs-2d", ConvexFn::abs_norm(2, 1.5)},
      {"quadratic", ConvexFn::quadratic(Matrix(2, 2, std::vector<double>{1.0, 0.2, 0.2, 0.5}))},
      {"sum-1d", ConvexFn::sum({ConvexFn::abs_norm(1), ConvexFn::quadratic(Matrix(1, 1, std::vector<double>{2.0}))})},
      {"indicator", ConvexFn::indicator(ConvexSet::box({-1.0}, {1.0}))},
  };
  double worst_env = -1e300, worst_cvx = -1e300;
  std::string where_env, where_cvx;
  for (const auto& [name, f] : fns) {
    const std::size_t d = f.dim();
    for (std::size_t k = 0; k < 100; ++k) {
      const Point x = s.point(d, 2.0);
      const double fx = f.value(x);
      double prev = -1e300;
      for (auto it = kAlphas.begin(); it != kAlphas.end(); ++it) {
        const double env = moreau_envelope(f, *it, x);
        const double excess = std::max(env - fx, prev - env) - 1e-10 * (1.0 + std::abs(env));
        if (excess > worst_env) worst_env = excess, where_env = name;
        prev = env;
      }
      const Point y = s.point(d, 2.0);
      const double t = s.uniform();
      Point m(d);
      for (std::size_t j = 0; j < d; ++j) m[j] = t * x[j] + (1 - t) * y[j];
      const double fy = f.value(y);
      if (std::isfinite(fx) && std::isfinite(fy)) {
        const double excess = f.value(m) - (t * fx + (1 - t) * fy) - 1e-12 * (1 + std::abs(fx) + std::abs(fy));
        if (excess > worst_cvx) worst_cvx = excess, where_cvx = name;
      }
    }
  }
  out.push_back(make("monotone", "moreau envelope below f and nondecreasing as alpha decreases", worst_env <= 0.0,
                     "worst excess " + fmt(worst_env) + " (" + where_env + ")"));
  out.push_back(make("monotone", "convex functions are convex on sampled triples", worst_cvx <= 0.0,
                     "worst excess " + fmt(worst_cvx) + " (" + where_cvx + ")"));

  double worst_idem = 0.0;
  for (const auto& [name, op, slack] : ops) {
    const auto& dom = op.domain();
    for (std::size_t k = 0; k < 100; ++k) {
      const Point p = dom.project(s.point(dom.dim(), 4.0));
      worst_idem = std::max(worst_idem, distance(dom.project(p), p));
    }
  }
  out.push_back(make("monotone", "projection is idempotent", worst_idem <= 1e-12, "worst drift " + fmt(worst_idem)));
  return out;
}

// ---------------------------------------------------------------------------

Results measure(std::uint64_t seed) {
  Results out;
  Sampler s(seed);
  double sym = 0.0, tri = -1e300, shift = 0.0;
  for (std::size_t n : {5u, 12u}) {
    for (std::size_t k = 0; k < 20; ++k) {
      const EmpiricalMeasure a(2, s.cloud(n, 2)), b(2, s.cloud(n, 2, 1.5)), c(2, s.cloud(n, 2, 0.7));
      const double ab = wasserstein2(a, b), ba = wasserstein2(b, a);
      sym = std::max(sym, std::abs(ab - ba));
      tri = std::max(tri, ab - wasserstein2(a, c) - wasserstein2(c, b) - 1e-10);
      const Point v = s.point(2, 3.0);
      auto shifted = [&](const EmpiricalMeasure& m) {
        std::vector<double> p(m.data().begin(), m.data().end());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] += v[i % 2];
        return EmpiricalMeasure(2, p);
      };
      shift = std::max(shift, std::abs(wasserstein2(shifted(a), shifted(b)) - ab));
    }
  }
  out.push_back(make("measure", "W2 is symmetric", sym <= 1e-12, "max asymmetry " + fmt(sym)));
  out.push_back(make("measure", "W2 triangle inequality", tri <= 0.0, "worst excess " + fmt(tri)));
  out.push_back(make("measure", "W2 is shift invariant", shift <= 1e-12, "max change " + fmt(shift)));

  double sort_gap = 0.0;
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t k = 0; k < 10; ++k) {
      const auto xa = s.cloud(n, 1), xb = s.cloud(n, 1, 2.0);
      std::vector<double> cost(n * n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = (xa[i] - xb[j]) * (xa[i] - xb[j]);
      const auto perm = exhaustive_assignment(cost, n);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += cost[i * n + perm[i]];
      const double brute = std::sqrt(total / static_cast<double>(n));
      sort_gap = std::max(sort_gap, std::abs(brute - wasserstein2(EmpiricalMeasure(1, xa), EmpiricalMeasure(1, xb))));
    }
  }
  out.push_back(make("measure", "1-D sorted pairing equals brute-force assignment", sort_gap <= 1e-12,
                     "max gap " + fmt(sort_gap)));

  bool coupling_ok = true;
  for (std::size_t k = 0; k < 20; ++k) {
    const EmpiricalMeasure x(2, s.cloud(10, 2)), y(2, s.cloud(10, 2));
    coupling_ok = coupling_ok && w2_coupling_bound_check(x, y).ok;
  }
  out.push_back(make("measure", "W2 below the paired L2 distance", coupling_ok, "20 random pairings"));
  return out;
}

// ---------------------------------------------------------------------------

Results coeffs(std::uint64_t seed) {
  Results out;
  Sampler s(seed);
  double worst = -1e300;
  for (const auto& rho : {Modulus::linear(2.0), Modulus::log(1e-2), Modulus::loglog(1e-2), Modulus::log(0.2)}) {
    for (std::size_t k = 0; k < 500; ++k) {
      double u = std::pow(10.0, s.uniform(-6.0, 0.5)), v = std::pow(10.0, s.uniform(-6.0, 0.5));
      if (u > v) std::swap(u, v);
      const double t = s.uniform();
      worst = std::max(worst, t * rho(u) + (1 - t) * rho(v) - rho(t * u + (1 - t) * v) - 1e-10);
      worst = std::max(worst, rho(u) - rho(v) - 1e-15);
    }
  }
  out.push_back(make("coeffs", "modulus is concave and nondecreasing", worst <= 0.0, "worst excess " + fmt(worst)));

  const MeanFieldCoefficients base{Drift::affine({0.1}, Matrix(1, 1, std::vector<double>{-1.0}),
                                                 Matrix(1, 1, std::vector<double>{0.5})),
                                   Diffusion::scalar(1, 0.5, 0.1)};
  const auto fam = PerturbationFamily::shifted(base, {0.3}, 0.2);
  double dev = -1e300;
  for (double eps : {0.5, 0.1, 0.01}) {
    const auto member = fam.at(eps);
    for (std::size_t k = 0; k < 100; ++k) {
      const Point x = s.point(1, 3.0);
      const EmpiricalMeasure mu(1, s.cloud(6, 1));
      const auto view = MeasureView::of(mu);
      const double diff = distance(member.drift.eval(x, view), base.drift.eval(x, view));
      dev = std::max(dev, diff - fam.rho_b(eps) * (1 + 1e-6));
      const double sdiff = frobenius_distance(member.diffusion.eval(x, view), base.diffusion.eval(x, view));
      dev = std::max(dev, sdiff - fam.rho_sigma(eps) * (1 + 1e-6));
    }
  }
  out.push_back(make("coeffs", "measured perturbation within declared bounds", dev <= 0.0, "worst excess " + fmt(dev)));

  const Drift smooth = Drift::callback(
      2,
      [](std::span<const double> x, const MeasureView& mu, std::span<double> o) {
        o[0] = std::sin(x[0]) * x[1] + mu.mean[0];
        o[1] = -x[1] * x[1] * x[1] / 3.0 + std::cos(x[0]);
      },
      [](std::span<const double> x, const MeasureView&, std::span<double> g) {
        g[0] = std::cos(x[0]) * x[1];
        g[1] = std::sin(x[0]);
        g[2] = -std::sin(x[0]);
        g[3] = -x[1] * x[1];
      },
      "smooth");
  const Drift affine = Drift::affine({0.2, -0.1}, Matrix(2, 2, std::vector<double>{-1.0, 0.3, 0.1, -2.0}),
                                     Matrix(2, 2, std::vector<double>{0.5, 0.0, 0.0, 0.5}));
  double grad_rel = 0.0;
  for (const Drift* b : {&smooth, &affine}) {
    for (std::size_t k = 0; k < 50; ++k) {
      const Point x = s.point(2);
      const EmpiricalMeasure mu(2, s.cloud(4, 2));
      const auto view = MeasureView::of(mu);
      const Matrix exact = b->gradient(x, view);
      const Matrix fd = b->finite_difference_gradient(x, view);
      grad_rel = std::max(grad_rel, frobenius_distance(exact, fd) / std::max(1.0, frobenius(exact)));
    }
  }
  out.push_back(make("coeffs", "gradient matches central differences", grad_rel <= 1e-5, "max relative gap " + fmt(grad_rel)));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

SdeProblem mean_field_problem(bool reflected) {
  SdeProblem p;
  const double inf = std::numeric_limits<double>::infinity();
  p.op = reflected ? MonotoneOperator::normal_cone(ConvexSet::box({0.0, -1.0}, {inf, 1.0}))
                   : MonotoneOperator::zero(2);
  p.coeffs = PerturbationFamily::constant(
      {Drift::affine({0.2, 0.0}, Matrix(2, 2, std::vector<double>{-1.0, 0.2, 0.0, -0.5}),
                     Matrix(2, 2, std::vector<double>{0.5, 0.0, 0.0, 0.3})),
       Diffusion::scalar(2, 0.6, 0.0, 0.1)});
  p.x0 = {0.5, 0.0};
  p.horizon = 0.5;
  p.eps = 1.0;
  return p;
}

bool same_ensemble(const PathEnsemble& a, const PathEnsemble& b) {
  return a.x == b.x && a.k == b.k && a.k_tv == b.k_tv && a.recorded_steps == b.recorded_steps;
}

}  // namespace

Results sde(std::uint64_t seed) {
  Results out;
  const RngSpec rng{seed, 0};

  {
    SchemeSpec proj{SchemeMethod::kProjection, 1e-2, std::nullopt};
    const PathEnsemble ens = simulate(mean_field_problem(true), proj, 300, rng);
    const ConvexSet dom = mean_field_problem(true).op.domain();
    bool inside = true, tv_ok = true, k0 = true;
    for (std::size_t i = 0; i < ens.particles; ++i) {
      for (std::size_t r = 0; r < ens.records(); ++r) {
        inside = inside && dom.contains(ens.state(i, r), 0.0);
        if (r > 0) tv_ok = tv_ok && ens.total_variation(i, r) >= ens.total_variation(i, r - 1);
      }
      k0 = k0 && norm(ens.reaction(i, 0)) == 0.0 && ens.total_variation(i, 0) == 0.0;
    }
    out.push_back(make("sde", "projection keeps every state in the domain", inside, "300 particles, 50 steps"));
    out.push_back(make("sde", "K starts at 0 and |K|_TV is nondecreasing", tv_ok && k0, "300 particles"));

    SchemeSpec pen{SchemeMethod::kYosidaPenalized, 1e-2, std::nullopt};
    const PathEnsemble pe = simulate(mean_field_problem(true), pen, 300, rng);
    out.push_back(make("sde", "penalized distance to the domain within alpha max|A^alpha|",
                       pe.max_domain_distance <= pe.penalization_bound + 1e-12,
                       "distance " + fmt(pe.max_domain_distance) + ", bound " + fmt(pe.penalization_bound)));
  }

  {
    double worst = 0.0;
    for (bool reflected : {false, true}) {
      for (auto method : {SchemeMethod::kProjection, SchemeMethod::kYosidaPenalized}) {
        SdeProblem p = mean_field_problem(reflected);
        p.eps = 0.0;
        const SchemeSpec sc{method, 1e-2, std::nullopt};
        const PathEnsemble ens = simulate(p, sc, 1, rng);
        const SkeletonSolution x0 = solve_limit_ode(p, sc);
        for (std::size_t n = 0; n < ens.records(); ++n)
          worst = std::max(worst, distance(ens.state(0, n), x0.path.state(ens.recorded_steps[n])));
      }
    }
    out.push_back(make("sde", "zero noise with one particle reproduces the limit ODE", worst <= 1e-12,
                       "max per-step gap " + fmt(worst)));
  }

  {
    const SchemeSpec sc{SchemeMethod::kProjection, 1e-2, std::nullopt};
    auto sup_moment = [&](std::size_t n) {
      SimulationOptions o;
      double total = 0.0;
      std::vector<double> sup(n, 0.0);
      o.observer = [&](std::size_t, std::span<const double> st) {
        for (std::size_t i = 0; i < n; ++i) sup[i] = std::max(sup[i], norm2(st.subspan(i * 2, 2)));
      };
      o.record_every = 0;
      simulate(mean_field_problem(true), sc, n, rng, o);
      for (double v : sup) total += v;
      return total / static_cast<double>(n);
    };
    const double m1 = sup_moment(500), m2 = sup_moment(1000);
    const double ratio = m2 / m1;
    out.push_back(make("sde", "second sup-moment finite and stable under particle doubling",
                       std::isfinite(m1) && ratio >= 0.5 && ratio <= 2.0, "ratio " + fmt(ratio)));
  }

  {
    const SchemeSpec sc{SchemeMethod::kProjection, 5e-2, std::nullopt};
    auto var_of_mean = [&](std::size_t n) {
      std::vector<double> means;
      SimulationOptions o;
      o.record_every = 0;
      for (std::size_t r = 0; r < 60; ++r) {
        const PathEnsemble e = simulate(mean_field_problem(false), sc, n, RngSpec{seed + 1, r * 4096}, o);
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += e.terminal(i)[0];
        means.push_back(m / static_cast<double>(n));
      }
      return sample_variance(means);
    };
    const double ratio = var_of_mean(100) / var_of_mean(200) / 2.0;
    out.push_back(make("sde", "doubling N halves the variance of the ensemble mean", ratio >= 1.0 / 3.0 && ratio <= 3.0,
                       "ratio / 2 = " + fmt(ratio)));
  }

  {
    SdeProblem p = mean_field_problem(false);
    const SchemeSpec sc{SchemeMethod::kProjection, 1e-2, std::nullopt};
    const PathEnsemble a = simulate(p, sc, 50, rng);
    const PathEnsemble b = simulate(p, sc, 50, rng);
    out.push_back(make("sde", "re-simulation is bit-identical", same_ensemble(a, b), "same spec twice"));
  }
  return out;
}

Results determinism(std::uint64_t seed, const std::vector<std::size_t>& workers) {
  Results out;
  const RngSpec rng{seed, 0};
  auto check = [&](const std::string& name, const std::function<std::vector<double>(std::size_t)>& run) {
    const auto ref = run(workers.front());
    bool ok = true;
    std::string detail = "workers";
    for (std::size_t w : workers) {
      detail += " " + std::to_string(w);
      ok = ok && run(w) == ref;
    }
    out.push_back(make("determinism", name, ok, detail));
  };
  auto flatten = [](const PathEnsemble& e) {
    std::vector<double> v = e.x;
    v.insert(v.end(), e.k.begin(), e.k.end());
    v.insert(v.end(), e.k_tv.begin(), e.k_tv.end());
    return v;
  };
  for (auto method : {SchemeMethod::kProjection, SchemeMethod::kYosidaPenalized}) {
    check("simulate (" + to_string(method) + ")", [&](std::size_t w) {
      SimulationOptions o;
      o.workers = w;
      return flatten(simulate(mean_field_problem(true), SchemeSpec{method, 1e-2, std::nullopt}, 257, rng, o));
    });
  }
  check("simulate_mdp", [&](std::size_t w) {
    SdeProblem p = mean_field_problem(false);
    p.eps = 1e-3;
    const SchemeSpec sc{SchemeMethod::kProjection, 1e-2, std::nullopt};
    MdpSpec spec;
    spec.limit_path = solve_limit_ode(p, sc).path;
    SimulationOptions o;
    o.workers = w;
    return flatten(simulate_mdp(p, spec, sc, 129, rng, o));
  });
  check("ldp_sweep", [&](std::size_t w) {
    SdeProblem p;
    SimulationOptions o;
    o.workers = w;
    const auto t = ldp_sweep(p, RareEvent::half_space({1.0}, 0.5), {0.25, 0.1}, 2000,
                             SchemeSpec{SchemeMethod::kProjection, 0.05, std::nullopt}, rng, o);
    std::vector<double> v;
    for (const auto& r : t.rows) v.push_back(static_cast<double>(r.hits));
    return v;
  });
  check("minimize_rate", [&](std::size_t w) {
    RateProblem rp;
    rp.target = RateTarget::half_space({1.0}, 1.0);
    rp.scheme = SchemeSpec{SchemeMethod::kProjection, 0.05, std::nullopt};
    rp.settings.seed = seed;
    rp.settings.rounds = 2;
    rp.settings.workers = w;
    const RateResult r = minimize_rate(rp);
    std::vector<double> v(r.h.data().begin(), r.h.data().end());
    v.push_back(r.rate);
    return v;
  });
  return out;
}

// ---------------------------------------------------------------------------

namespace {

SdeProblem brownian(std::size_t d = 1) {
  SdeProblem p;
  p.op = MonotoneOperator::zero(d);
  p.coeffs = PerturbationFamily::constant({Drift::affine(Point(d, 0.0), Matrix(d, d), Matrix(d, d)),
                                           Diffusion::scalar(d, 1.0)});
  p.x0 = Point(d, 0.0);
  return p;
}

SdeProblem reflected_half_line(double x0) {
  SdeProblem p = brownian(1);
  p.op = MonotoneOperator::normal_cone(ConvexSet::box({0.0}, {std::numeric_limits<double>::infinity()}));
  p.x0 = {x0};
  return p;
}

}  // namespace

Results variational(std::uint64_t seed) {
  Results out;
  Sampler s(seed);

  {
    RateProblem rp;
    rp.problem = brownian();
    rp.target = RateTarget::half_space({1.0}, 1.0);
    rp.scheme = SchemeSpec{SchemeMethod::kProjection, 0.02, std::nullopt};
    rp.settings.seed = seed;
    const RateResult r = minimize_rate(rp);
    double worst = -1e300;
    for (std::size_t k = 0; k < 50; ++k) {
      Point h = s.point(50, 1.0);
      double integral = 0.0;
      for (double v : h) integral += v * 0.02;
      if (std::abs(integral) < 1e-3) continue;
      for (double& v : h) v *= 1.0 / integral;  // Y(1) = 1 exactly
      const double e = energy(ControlGrid(1.0, 50, 1, h));
      worst = std::max(worst, r.rate - e - 1e-9);
    }
    const double self = r.rate - energy(r.h);
    out.push_back(make("variational", "I* below the energy of every feasible probe control",
                       worst <= 0.0 && std::abs(self) <= 1e-9,
                       "I* = " + fmt(r.rate) + ", worst excess " + fmt(worst)));
  }

  {
    SdeProblem p;
    p.op = MonotoneOperator::zero(1);
    p.coeffs = PerturbationFamily::constant({Drift::affine({0.0}, Matrix(1, 1, std::vector<double>{-1.0}),
                                                           Matrix(1, 1, std::vector<double>{0.5})),
                                             Diffusion::scalar(1, 1.0, 0.2)});
    p.x0 = {0.3};
    const SchemeSpec sc{SchemeMethod::kProjection, 0.05, std::nullopt};
    const SkeletonSolution limit = solve_limit_ode(p, sc);
    const SkeletonMap map(p, limit, sc);
    const Objective f = rate_objective(map, RateTarget::endpoint_equals({1.0}, 1e-3), 10.0);
    double worst = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
      const Point h = s.point(20, 0.5);
      const Point g1 = finite_difference_gradient(f, h, 1e-5);
      const Point g2 = finite_difference_gradient(f, h, 2e-5);
      Point rich(g1.size());
      for (std::size_t j = 0; j < g1.size(); ++j) rich[j] = (4.0 * g1[j] - g2[j]) / 3.0;
      worst = std::max(worst, distance(g1, rich) / std::max(1e-12, norm(rich)));
    }
    out.push_back(make("variational", "finite-difference gradient matches its Richardson estimate", worst <= 1e-4,
                       "max relative gap " + fmt(worst)));
  }

  {
    bool same = true;
    for (bool reflected : {false, true}) {
      for (auto method : {SchemeMethod::kProjection, SchemeMethod::kYosidaPenalized}) {
        SdeProblem p = mean_field_problem(reflected);
        const SchemeSpec sc{method, 1e-2, std::nullopt};
        const SkeletonSolution x0 = solve_limit_ode(p, sc);
        const SkeletonSolution y = solve_skeleton(p, ControlGrid::zero(p.horizon, 50, 2), x0, sc);
        same = same && y.path.x == x0.path.x && y.path.k == x0.path.k && y.path.k_tv == x0.path.k_tv;
      }
    }
    out.push_back(make("variational", "skeleton with zero control is bit-identical to the limit ODE", same,
                       "both schemes, free and reflected"));
  }

  {
    auto rate_at = [&](const SdeProblem& p, const RateTarget& t, double dt) {
      RateProblem rp;
      rp.problem = p;
      rp.target = t;
      rp.scheme = SchemeSpec{SchemeMethod::kProjection, dt, std::nullopt};
      rp.settings.seed = seed;
      return minimize_rate(rp).rate;
    };
    const double g1 = rate_at(brownian(), RateTarget::half_space({1.0}, 1.0), 0.02);
    const double g2 = rate_at(brownian(), RateTarget::half_space({1.0}, 1.0), 0.01);
    const double t1 = rate_at(reflected_half_line(0.5), RateTarget::tube_exit(0.25), 0.02);
    const double t2 = rate_at(reflected_half_line(0.5), RateTarget::tube_exit(0.25), 0.01);
    const double rel = std::max(std::abs(g2 - g1) / g1, std::abs(t2 - t1) / t1);
    out.push_back(make("variational", "halving dt changes I* by less than 2%", rel < 0.02,
                       "gaussian " + fmt(g1) + " -> " + fmt(g2) + ", tube " + fmt(t1) + " -> " + fmt(t2)));
  }

  {
    SdeProblem p = mean_field_problem(false);
    const SchemeSpec sc{SchemeMethod::kProjection, 1e-2, std::nullopt};
    const SkeletonSolution x0 = solve_limit_ode(p, sc);
    const Point psi = s.point(100, 1.0);
    Point psi2 = psi;
    for (double& v : psi2) v *= 2.0;
    const auto n1 = solve_mdp_skeleton(p, ControlGrid(p.horizon, 50, 2, psi), x0, sc);
    const auto n2 = solve_mdp_skeleton(p, ControlGrid(p.horizon, 50, 2, psi2), x0, sc);
    double worst = 0.0;
    for (std::size_t i = 0; i < n1.path.x.size(); ++i) worst = std::max(worst, std::abs(n2.path.x[i] - 2 * n1.path.x[i]));
    out.push_back(make("variational", "MDP skeleton is homogeneous in the control", worst <= 1e-10, "max gap " + fmt(worst)));
  }
  return out;
}

// ---------------------------------------------------------------------------

Results asymptotics(std::uint64_t seed) {
  Results out;
  Sampler s(seed);

  const auto rep = ContractionFamily::radial({0.3, -1.2}).check_axioms(1000, seed);
  out.push_back(make("asymptotics", "radial contraction family satisfies the axioms", rep.ok,
                     "fixed " + fmt(rep.fixed_point_error) + ", ordering " + fmt(rep.ordering_excess) + ", identity " +
                         fmt(rep.identity_error) + ", continuity " + fmt(rep.continuity_error)));

  bool inc = true;
  LilSpec spec;
  spec.c = std::exp(1.0);
  spec.j_min = 3;
  spec.j_max = 12;
  const auto grid = spec.u_grid();
  for (std::size_t k = 1; k < grid.size(); ++k) inc = inc && lil_psi(grid[k]) > lil_psi(grid[k - 1]);
  bool guards = true;
  for (double u : {std::exp(1.0), 2.0, 1.0, 0.5}) {
    try {
      lil_psi(u);
      guards = false;
    } catch (const DomainError&) {
    }
  }
  for (double u : {1.0 / std::exp(1.0), 0.5, 2.0}) {
    try {
      lil_phi(u);
      guards = false;
    } catch (const DomainError&) {
    }
  }
  out.push_back(make("asymptotics", "psi increasing on the grid; regime guards reject log log u <= 0", inc && guards,
                     "u = e^3 .. e^12"));

  {
    SdeProblem p = brownian();
    const SchemeSpec sc{SchemeMethod::kProjection, 0.05, std::nullopt};
    const RareEvent ev = RareEvent::half_space({1.0}, 0.7);
    const std::vector<double> eps = {0.5, 0.25, 0.1};
    const auto a = ldp_sweep(p, ev, eps, 3000, sc, RngSpec{seed, 0});
    const auto b = ldp_sweep(p, ev.complemented(), eps, 3000, sc, RngSpec{seed, 0});
    bool ok = true;
    for (std::size_t k = 0; k < eps.size(); ++k) ok = ok && a.rows[k].hits + b.rows[k].hits == a.rows[k].paths;

    SdeProblem r = reflected_half_line(0.5);
    const RareEvent tube = RareEvent::tube_exit(0.25, solve_limit_ode(r, sc).path);
    const auto c = ldp_sweep(r, tube, eps, 2000, sc, RngSpec{seed, 0});
    const auto d = ldp_sweep(r, tube.complemented(), eps, 2000, sc, RngSpec{seed, 0});
    for (std::size_t k = 0; k < eps.size(); ++k) ok = ok && c.rows[k].hits + d.rows[k].hits == c.rows[k].paths;
    out.push_back(make("asymptotics", "event and complement frequencies sum to 1", ok, "half-space and tube exit"));
  }

  {
    const SdeProblem p = brownian();
    LimitSetSettings ls;
    ls.lbfgs.max_iterations = 100;
    double worst = -1e300;
    for (std::size_t k = 0; k < 4; ++k) {
      Trajectory q1;
      q1.dim = 1;
      q1.dt = 1.0 / 25.0;
      q1.x.resize(26);
      double acc = 0.0;
      for (std::size_t n = 0; n <= 25; ++n) {
        q1.x[n] = acc;
        acc += s.normal(0.5);
      }
      q1.k.assign(26, 0.0);
      q1.k_tv.assign(26, 0.0);
      Trajectory q2 = q1;
      for (std::size_t n = 1; n <= 25; ++n) q2.x[n] += s.normal(0.1);
      const double d1 = limit_set_distance(q1, p, ls).distance;
      const double d2 = limit_set_distance(q2, p, ls).distance;
      worst = std::max(worst, std::abs(d1 - d2) - q1.sup_distance(q2) - 1e-3);
    }
    out.push_back(make("asymptotics", "limit-set distance is 1-Lipschitz in q", worst <= 0.0, "worst excess " + fmt(worst)));
  }
  return out;
}

// ---------------------------------------------------------------------------

Results cli(std::uint64_t seed) {
  namespace fs = std::filesystem;
  namespace mc = mvsde::cli;
  using mc::json;
  Results out;

  const json base = json::parse(R"({
    "problem": {"x0": [0.0], "horizon": 1.0, "eps": 1.0},
    "scheme": {"method": "projection", "dt": 0.05},
    "rng": {"seed": 7},
    "simulate": {"particles": 20}
  })");
  const json reordered = json::parse(R"({"simulate":{"particles":20},"rng":{"seed":7},
    "scheme":{"dt":0.05,"method":"projection"},"problem":{"eps":1,"horizon":1,"x0":[0]}})");
  json explicit_defaults = base;
  explicit_defaults["operator"] = {{"kind", "zero"}};
  explicit_defaults["simulate"]["record_every"] = 1;
  json other_out = base;
  other_out["output"] = {{"dir", "/tmp/elsewhere"}};
  json changed = base;
  changed["scheme"]["dt"] = 0.025;
  json changed_seed = base;
  changed_seed["rng"]["seed"] = 8;

  const auto h = mc::parse_config(base).hash;
  const bool invariant = mc::parse_config(reordered).hash == h && mc::parse_config(explicit_defaults).hash == h &&
                         mc::parse_config(other_out).hash == h;
  const bool sensitive = mc::parse_config(changed).hash != h && mc::parse_config(changed_seed).hash != h;
  out.push_back(make("cli", "config hash ignores layout and defaults, tracks semantics", invariant && sensitive,
                     "hash " + mc::hash_hex(h)));

  const fs::path dir = fs::temp_directory_path() / ("mvsde-props-" + std::to_string(seed));
  fs::remove_all(dir);
  json full = base;
  full["skeleton"] = json::object();
  full["rate"] = {{"target", {{"kind", "endpoint"}, {"point", {1.0}}}}, {"rounds", 2}, {"random_restarts", 1}};
  full["ldp_sweep"] = {{"event", {{"kind", "half_space"}, {"normal", {1.0}}, {"level", 1.0}}},
                       {"eps", {0.5, 0.25}},
                       {"paths", 500},
                       {"reference_rate", 0.5}};
  full["mdp_sweep"] = {{"eps", {0.01}}, {"paths", 200}};
  full["diag"] = {{"samples", 20}, {"particles", 20}};
  bool roundtrip = true;
  std::string detail;
  const auto cfg = mc::parse_config(full);
  for (const std::string command : {"simulate", "skeleton", "rate", "ldp-sweep", "mdp-sweep", "diag"}) {
    mc::RunContext ctx;
    ctx.output_dir = (dir / command).string();
    std::ostringstream log;
    mc::run_command(command, cfg, ctx, log);
    std::ifstream f(dir / command / "report.json");
    const json report = json::parse(f);
    const auto again = mc::parse_config(report.at("config"));
    const bool ok = report.at("schema_version") == mc::kSchemaVersion &&
                    report.at("config_hash") == mc::hash_hex(again.hash) && again.hash == cfg.hash;
    if (!ok) detail += command + " ";
    roundtrip = roundtrip && ok;
  }
  fs::remove_all(dir);
  out.push_back(make("cli", "every report re-parses under the same schema", roundtrip,
                     roundtrip ? "6 commands" : "failed: " + detail));
  return out;
}

Results all(std::uint64_t seed) {
  Results out;
  for (auto* f : {&monotone, &measure, &coeffs, &sde, &variational, &asymptotics, &cli}) {
    auto r = f(seed);
    out.insert(out.end(), r.begin(), r.end());
  }
  auto d = determinism(seed, {1, 4, 16});
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

}  // namespace props
