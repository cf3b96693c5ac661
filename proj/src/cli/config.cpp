#include "mvsde/cli/config.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "mvsde/errors.hpp"

namespace mvsde::cli {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError("field '" + path + "': " + msg);
}

// Walks one JSON object, records which keys were read, and writes the normalized
// value of every field (defaults included) into `out`.
class Obj {
 public:
  Obj(const json& j, std::string path, json& out) : j_(j), path_(std::move(path)), out_(out) {
    if (!j_.is_object()) fail(path_, "must be an object");
    out_ = json::object();
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  double num(const std::string& key, std::optional<double> def = std::nullopt, bool allow_inf = false) {
    const double v = read_number(key, def, allow_inf);
    if (std::isinf(v))
      out_[key] = v > 0 ? "inf" : "-inf";
    else
      out_[key] = v;
    return v;
  }

  double positive(const std::string& key, std::optional<double> def = std::nullopt) {
    const double v = num(key, def);
    if (!(v > 0.0)) fail(at(key), "must be positive");
    return v;
  }

  std::uint64_t uint(const std::string& key, std::optional<std::uint64_t> def = std::nullopt) {
    seen_.insert(key);
    std::uint64_t v = 0;
    if (!has(key)) {
      if (!def) fail(at(key), "is required");
      v = *def;
    } else {
      const json& e = j_.at(key);
      if (e.is_number_unsigned())
        v = e.get<std::uint64_t>();
      else if (e.is_number_integer() && e.get<std::int64_t>() >= 0)
        v = static_cast<std::uint64_t>(e.get<std::int64_t>());
      else if (e.is_number_float() && e.get<double>() >= 0 && std::floor(e.get<double>()) == e.get<double>() &&
               e.get<double>() < 1.8e19)
        v = static_cast<std::uint64_t>(e.get<double>());
      else
        fail(at(key), "must be a nonnegative integer");
    }
    out_[key] = v;
    return v;
  }

  std::size_t count(const std::string& key, std::optional<std::uint64_t> def = std::nullopt) {
    const auto v = uint(key, def);
    if (v == 0) fail(at(key), "must be positive");
    return static_cast<std::size_t>(v);
  }

  int integer(const std::string& key, std::optional<int> def = std::nullopt) {
    const double v = read_number(key, def ? std::optional<double>(*def) : std::nullopt, false);
    if (std::floor(v) != v || std::abs(v) > 1e6) fail(at(key), "must be an integer");
    out_[key] = static_cast<int>(v);
    return static_cast<int>(v);
  }

  bool flag(const std::string& key, bool def) {
    seen_.insert(key);
    bool v = def;
    if (has(key)) {
      if (!j_.at(key).is_boolean()) fail(at(key), "must be true or false");
      v = j_.at(key).get<bool>();
    }
    out_[key] = v;
    return v;
  }

  std::string str(const std::string& key, std::optional<std::string> def, const std::vector<std::string>& allowed) {
    seen_.insert(key);
    std::string v;
    if (!has(key)) {
      if (!def) fail(at(key), "is required");
      v = *def;
    } else {
      if (!j_.at(key).is_string()) fail(at(key), "must be a string");
      v = j_.at(key).get<std::string>();
    }
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      fail(at(key), "unknown value '" + v + "' (expected one of: " + list + ")");
    }
    out_[key] = v;
    return v;
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> def = std::nullopt,
                              std::size_t size = 0, bool allow_inf = false) {
    seen_.insert(key);
    std::vector<double> v;
    if (!has(key)) {
      if (!def) fail(at(key), "is required");
      v = *def;
    } else {
      const json& e = j_.at(key);
      if (!e.is_array()) fail(at(key), "must be an array of numbers");
      for (std::size_t i = 0; i < e.size(); ++i)
        v.push_back(to_number(e[i], at(key) + "[" + std::to_string(i) + "]", allow_inf));
    }
    if (size != 0 && v.size() != size)
      fail(at(key), "must have " + std::to_string(size) + " entries, got " + std::to_string(v.size()));
    json arr = json::array();
    for (double x : v) {
      if (std::isinf(x))
        arr.push_back(x > 0 ? "inf" : "-inf");
      else
        arr.push_back(x);
    }
    out_[key] = arr;
    return v;
  }

  Matrix matrix(const std::string& key, std::size_t d, std::optional<Matrix> def = std::nullopt) {
    seen_.insert(key);
    Matrix m(d, d);
    if (!has(key)) {
      if (!def) fail(at(key), "is required");
      m = *def;
    } else {
      const json& e = j_.at(key);
      if (!e.is_array() || e.size() != d) fail(at(key), "must be a " + std::to_string(d) + "x" + std::to_string(d) + " array");
      for (std::size_t i = 0; i < d; ++i) {
        if (!e[i].is_array() || e[i].size() != d) fail(at(key), "row " + std::to_string(i) + " must have " + std::to_string(d) + " entries");
        for (std::size_t j = 0; j < d; ++j)
          m(i, j) = to_number(e[i][j], at(key) + "[" + std::to_string(i) + "][" + std::to_string(j) + "]", false);
      }
    }
    json arr = json::array();
    for (std::size_t i = 0; i < d; ++i) {
      json row = json::array();
      for (std::size_t j = 0; j < d; ++j) row.push_back(m(i, j));
      arr.push_back(row);
    }
    out_[key] = arr;
    return m;
  }

  Obj obj(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) fail(at(key), "is required");
    return Obj(j_.at(key), at(key), out_[key]);
  }

  /// Missing objects read as {} so every default is made explicit.
  Obj obj_or_empty(const std::string& key) {
    seen_.insert(key);
    static const json kEmpty = json::object();
    return Obj(has(key) ? j_.at(key) : kEmpty, at(key), out_[key]);
  }

  const json& array(const std::string& key) {
    seen_.insert(key);
    if (!has(key) || !j_.at(key).is_array()) fail(at(key), "must be an array");
    out_[key] = json::array();
    return j_.at(key);
  }
  json& out(const std::string& key) { return out_[key]; }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown field");
  }

  const std::string& path() const { return path_; }
  /// Marks a key as known without normalizing it.
  void skip(const std::string& key) { seen_.insert(key); }

 private:
  static double to_number(const json& e, const std::string& path, bool allow_inf) {
    if (e.is_number()) {
      const double v = e.get<double>();
      if (!std::isfinite(v)) fail(path, "must be finite");
      return v;
    }
    if (allow_inf && e.is_string()) {
      const auto s = e.get<std::string>();
      if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
      if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    fail(path, allow_inf ? "must be a number, \"inf\" or \"-inf\"" : "must be a number");
  }

  double read_number(const std::string& key, std::optional<double> def, bool allow_inf) {
    seen_.insert(key);
    if (!has(key)) {
      if (!def) fail(at(key), "is required");
      return *def;
    }
    return to_number(j_.at(key), at(key), allow_inf);
  }

  const json& j_;
  std::string path_;
  json& out_;
  std::set<std::string> seen_;
};

template <class F>
auto guarded(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  } catch (const DomainError& e) {
    fail(path, e.what());
  }
}

std::vector<double> zeros(std::size_t d) { return std::vector<double>(d, 0.0); }

HalfSpace parse_face(Obj o, std::size_t d) {
  HalfSpace f;
  f.normal = o.numbers("normal", std::nullopt, d);
  f.offset = o.num("offset");
  o.done();
  return f;
}

ConvexSet parse_set(Obj o, std::size_t d) {
  const auto kind = o.str("kind", std::nullopt, {"half_space", "box", "ball", "polyhedron", "whole_space"});
  std::optional<ConvexSet> set;
  if (kind == "half_space") {
    auto n = o.numbers("normal", std::nullopt, d);
    const double c = o.num("offset");
    set = guarded(o.path(), [&] { return ConvexSet::half_space(n, c); });
  } else if (kind == "box") {
    auto lo = o.numbers("lower", std::nullopt, d, true);
    auto hi = o.numbers("upper", std::nullopt, d, true);
    set = guarded(o.path(), [&] { return ConvexSet::box(lo, hi); });
  } else if (kind == "ball") {
    auto c = o.numbers("center", std::nullopt, d);
    const double r = o.positive("radius");
    set = guarded(o.path(), [&] { return ConvexSet::ball(c, r); });
  } else if (kind == "whole_space") {
    set = ConvexSet::whole_space(d);
  } else {
    const json& faces = o.array("faces");
    std::vector<HalfSpace> fs;
    for (std::size_t i = 0; i < faces.size(); ++i) {
      json normalized;
      fs.push_back(parse_face(Obj(faces[i], o.at("faces") + "[" + std::to_string(i) + "]", normalized), d));
      o.out("faces").push_back(normalized);
    }
    auto w = o.numbers("witness", std::nullopt, d);
    set = guarded(o.path(), [&] { return ConvexSet::polyhedron(fs, w); });
  }
  o.done();
  return *set;
}

ConvexFn parse_fn(Obj o, std::size_t d) {
  const auto kind = o.str("kind", std::nullopt, {"abs_norm", "quadratic", "indicator", "sum"});
  std::optional<ConvexFn> fn;
  if (kind == "abs_norm") {
    const double w = o.positive("weight", 1.0);
    fn = ConvexFn::abs_norm(d, w);
  } else if (kind == "quadratic") {
    Matrix q = o.matrix("q", d);
    fn = guarded(o.path(), [&] { return ConvexFn::quadratic(q); });
  } else if (kind == "indicator") {
    fn = ConvexFn::indicator(parse_set(o.obj("set"), d));
  } else {
    const json& terms = o.array("terms");
    std::vector<ConvexFn> ts;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      json normalized;
      ts.push_back(parse_fn(Obj(terms[i], o.at("terms") + "[" + std::to_string(i) + "]", normalized), d));
      o.out("terms").push_back(normalized);
    }
    fn = guarded(o.path(), [&] { return ConvexFn::sum(ts); });
  }
  o.done();
  return *fn;
}

MonotoneOperator parse_operator(Obj o, std::size_t d) {
  const auto kind =
      o.str("kind", "zero", {"zero", "normal_cone", "subdifferential", "graph1d", "scaled", "translated"});
  std::optional<MonotoneOperator> op;
  if (kind == "zero") {
    op = MonotoneOperator::zero(d);
  } else if (kind == "normal_cone") {
    op = MonotoneOperator::normal_cone(parse_set(o.obj("set"), d));
  } else if (kind == "subdifferential") {
    const ConvexFn fn = parse_fn(o.obj("function"), d);
    op = guarded(o.path(), [&] { return MonotoneOperator::subdifferential(fn); });
  } else if (kind == "graph1d") {
    if (d != 1) fail(o.at("kind"), "graph1d requires dimension 1");
    MonotoneGraph1D g;
    const json& knots = o.array("knots");
    for (std::size_t i = 0; i < knots.size(); ++i) {
      json normalized;
      Obj k(knots[i], o.at("knots") + "[" + std::to_string(i) + "]", normalized);
      MonotoneGraph1D::Knot knot;
      knot.x = k.num("x");
      knot.lower = k.num("lower");
      knot.upper = k.num("upper", knot.lower);
      k.done();
      g.knots.push_back(knot);
      o.out("knots").push_back(normalized);
    }
    g.left_slope = o.num("left_slope", 0.0);
    g.right_slope = o.num("right_slope", 0.0);
    g.bounded_left = o.flag("bounded_left", false);
    g.bounded_right = o.flag("bounded_right", false);
    op = guarded(o.path(), [&] { return MonotoneOperator::graph1d(g); });
  } else if (kind == "scaled") {
    const MonotoneOperator base = parse_operator(o.obj("base"), d);
    const double f = o.positive("factor");
    op = MonotoneOperator::scaled(base, f);
  } else {
    const MonotoneOperator base = parse_operator(o.obj("base"), d);
    auto shift = o.numbers("shift", std::nullopt, d);
    op = guarded(o.path(), [&] { return MonotoneOperator::translated(base, shift); });
  }
  o.done();
  return *op;
}

PerturbationFamily parse_coefficients(Obj o, std::size_t d) {
  Obj dr = o.obj_or_empty("drift");
  dr.str("kind", "affine", {"affine"});
  auto b0 = dr.numbers("b0", zeros(d), d);
  Matrix b1 = dr.matrix("b1", d, Matrix(d, d));
  Matrix b2 = dr.matrix("b2", d, Matrix(d, d));
  dr.done();
  const Drift drift = Drift::affine(b0, b1, b2);

  Obj df = o.obj_or_empty("diffusion");
  const auto dkind = df.str("kind", "scalar", {"scalar", "constant"});
  std::optional<Diffusion> diffusion;
  if (dkind == "scalar") {
    const double s0 = df.num("s0", 1.0);
    const double s1 = df.num("s1", 0.0);
    const double s2 = df.num("s2", 0.0);
    diffusion = Diffusion::scalar(d, s0, s1, s2);
  } else {
    diffusion = Diffusion::constant(df.matrix("matrix", d));
  }
  df.done();

  Obj pt = o.obj_or_empty("perturbation");
  auto shift = pt.numbers("drift_shift", zeros(d), d);
  const double dshift = pt.num("diffusion_shift", 0.0);
  pt.done();
  o.done();
  MeanFieldCoefficients base{drift, *diffusion};
  bool trivial = dshift == 0.0;
  for (double v : shift) trivial = trivial && v == 0.0;
  return trivial ? PerturbationFamily::constant(base) : PerturbationFamily::shifted(base, shift, dshift);
}

RateTarget parse_target(Obj o, std::size_t d) {
  const auto kind = o.str("kind", std::nullopt, {"half_space", "endpoint", "tube_exit"});
  RateTarget t;
  if (kind == "half_space") {
    auto n = o.numbers("normal", std::nullopt, d);
    t = RateTarget::half_space(n, o.num("level"));
  } else if (kind == "endpoint") {
    auto g = o.numbers("point", std::nullopt, d);
    t = RateTarget::endpoint_equals(g, o.positive("tol", 1e-3));
  } else {
    t = RateTarget::tube_exit(o.positive("delta"));
  }
  o.done();
  return t;
}

std::vector<double> parse_eps_grid(Obj& o) {
  auto eps = o.numbers("eps");
  if (eps.empty()) fail(o.at("eps"), "must not be empty");
  for (double e : eps)
    if (!(e > 0.0 && e <= 1.0)) fail(o.at("eps"), "entries must lie in (0, 1]");
  return eps;
}

}  // namespace

void apply_override(json& raw, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &raw;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty key segment");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override '" + key + "' descends into a non-object");
      *node = json::object();
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

ExperimentConfig parse_config(const json& raw) {
  ExperimentConfig cfg;
  json canon;
  Obj top(raw, "", canon);
  const int version = top.integer("schema_version", kSchemaVersion);
  if (version != kSchemaVersion) fail("schema_version", "unsupported version " + std::to_string(version));

  // Problem first: it fixes the dimension.
  Obj pr = top.obj("problem");
  const Point x0 = pr.numbers("x0");
  if (x0.empty()) fail(pr.at("x0"), "must not be empty");
  const std::size_t d = x0.size();
  cfg.problem.x0 = x0;
  cfg.problem.horizon = pr.positive("horizon", 1.0);
  cfg.problem.eps = pr.num("eps", 1.0);
  if (!(cfg.problem.eps >= 0.0 && cfg.problem.eps <= 1.0)) fail(pr.at("eps"), "must lie in [0, 1]");
  std::optional<std::size_t> cloud_size;
  double cloud_std = 0.0;
  Point cloud_mean;
  if (pr.has("initial_cloud")) {
    Obj ic = pr.obj("initial_cloud");
    ic.str("kind", "gaussian", {"gaussian"});
    cloud_mean = ic.numbers("mean", x0, d);
    cloud_std = ic.num("std", 1.0);
    if (cloud_std < 0.0) fail(ic.at("std"), "must be nonnegative");
    cloud_size = ic.count("count");
    ic.done();
  }
  pr.done();

  cfg.problem.op = parse_operator(top.obj_or_empty("operator"), d);
  cfg.problem.coeffs = parse_coefficients(top.obj_or_empty("coefficients"), d);

  Obj rg = top.obj_or_empty("rng");
  cfg.rng.seed = rg.uint("seed", 0);
  cfg.rng.stream_offset = rg.uint("stream_offset", 0);
  rg.done();

  if (cloud_size) {
    // Gaussian cloud projected onto the closure of D(A).
    std::vector<double> pts(*cloud_size * d);
    const ConvexSet dom = cfg.problem.op.domain();
    Point z(d);
    for (std::size_t i = 0; i < *cloud_size; ++i) {
      CounterStream(cfg.rng, i, StreamPurpose::kInitialCloud).normals(0, z);
      for (std::size_t j = 0; j < d; ++j) z[j] = cloud_mean[j] + cloud_std * z[j];
      dom.project(z, std::span<double>(pts).subspan(i * d, d));
    }
    cfg.problem.initial_cloud = EmpiricalMeasure(d, std::move(pts));
  }
  guarded("problem", [&] { cfg.problem.validate(); });

  Obj sc = top.obj_or_empty("scheme");
  cfg.scheme.method = sc.str("method", "projection", {"projection", "yosida-penalized"}) == "projection"
                          ? SchemeMethod::kProjection
                          : SchemeMethod::kYosidaPenalized;
  cfg.scheme.dt = sc.positive("dt", 1e-3);
  if (sc.has("alpha")) cfg.scheme.alpha = sc.positive("alpha");
  sc.done();
  guarded("scheme", [&] { cfg.scheme.validate(cfg.problem.op, cfg.problem.horizon); });
  const std::size_t steps = cfg.scheme.steps(cfg.problem.horizon);

  if (top.has("output")) {
    top.skip("output");
    json ignored;
    Obj out(raw.at("output"), "output", ignored);
    cfg.output_dir = out.str("dir", "", {});
    out.done();
  }

  if (top.has("simulate")) {
    Obj o = top.obj("simulate");
    SimulateBlock b;
    b.particles = o.count("particles", b.particles);
    b.record_every = static_cast<std::size_t>(o.uint("record_every", b.record_every));
    b.format = o.str("format", b.format, {"csv", "binary", "both"});
    o.done();
    if (cfg.problem.initial_cloud && cfg.problem.initial_cloud->size() != b.particles)
      fail("simulate.particles", "must equal problem.initial_cloud.count");
    cfg.simulate = b;
  }
  if (top.has("skeleton")) {
    Obj o = top.obj("skeleton");
    SkeletonBlock b;
    if (o.has("control")) {
      const json& rows = o.array("control");
      if (rows.size() != 1 && rows.size() != steps)
        fail(o.at("control"), "must hold 1 or " + std::to_string(steps) + " rows of length " + std::to_string(d));
      for (std::size_t n = 0; n < steps; ++n) {
        const json& row = rows[rows.size() == 1 ? 0 : n];
        if (!row.is_array() || row.size() != d) fail(o.at("control"), "rows must have length " + std::to_string(d));
        for (std::size_t j = 0; j < d; ++j) {
          if (!row[j].is_number()) fail(o.at("control"), "entries must be numbers");
          b.control.push_back(row[j].get<double>());
        }
      }
      for (const auto& row : rows) {
        json r = json::array();
        for (const auto& v : row) r.push_back(v.get<double>());
        o.out("control").push_back(r);
      }
    }
    b.mdp = o.flag("mdp", false);
    o.done();
    cfg.skeleton = b;
  }
  if (top.has("rate")) {
    Obj o = top.obj("rate");
    RateBlock b;
    b.target = parse_target(o.obj("target"), d);
    b.settings.rounds = o.count("rounds", b.settings.rounds);
    b.settings.initial_penalty = o.positive("initial_penalty", b.settings.initial_penalty);
    b.settings.penalty_growth = o.positive("penalty_growth", b.settings.penalty_growth);
    b.settings.random_restarts = static_cast<std::size_t>(o.uint("random_restarts", b.settings.random_restarts));
    b.settings.restart_scale = o.positive("restart_scale", b.settings.restart_scale);
    b.settings.feasibility_tol = o.positive("feasibility_tol", b.settings.feasibility_tol);
    b.settings.lbfgs.max_iterations = o.count("max_iterations", b.settings.lbfgs.max_iterations);
    b.settings.seed = cfg.rng.seed;
    o.done();
    guarded("rate.target", [&] { b.target.validate(d, steps); });
    cfg.rate = b;
  }
  if (top.has("ldp_sweep")) {
    Obj o = top.obj("ldp_sweep");
    LdpBlock b;
    Obj ev = o.obj("event");
    const auto kind = ev.str("kind", std::nullopt, {"half_space", "tube_exit"});
    if (kind == "half_space") {
      auto n = ev.numbers("normal", std::nullopt, d);
      b.event = RareEvent::half_space(n, ev.num("level"));
    } else {
      b.event = RareEvent::tube_exit(ev.positive("delta"), Trajectory{});
    }
    b.event.complement = ev.flag("complement", false);
    ev.done();
    b.eps = parse_eps_grid(o);
    b.paths = o.count("paths", b.paths);
    if (o.has("reference_rate")) b.reference_rate = o.num("reference_rate");
    o.done();
    cfg.ldp = b;
  }
  if (top.has("mdp_sweep")) {
    Obj o = top.obj("mdp_sweep");
    MdpBlock b;
    b.eps = parse_eps_grid(o);
    b.lambda_exponent = o.num("lambda_exponent", b.lambda_exponent);
    if (!(b.lambda_exponent > 0.0 && b.lambda_exponent < 0.5)) fail(o.at("lambda_exponent"), "must lie in (0, 0.5)");
    b.paths = o.count("paths", b.paths);
    if (b.paths < 2) fail(o.at("paths"), "must be at least 2");
    const auto stat = o.str("statistic", "terminal-variance", {"terminal-variance", "terminal-mean", "sup-quantile"});
    b.settings.statistic = stat == "terminal-variance" ? MdpStatistic::kTerminalVariance
                           : stat == "terminal-mean"   ? MdpStatistic::kTerminalMean
                                                       : MdpStatistic::kSupQuantile;
    b.settings.component = static_cast<std::size_t>(o.uint("component", 0));
    if (b.settings.component >= d) fail(o.at("component"), "out of range");
    b.settings.quantile = o.num("quantile", 0.9);
    if (!(b.settings.quantile > 0.0 && b.settings.quantile < 1.0)) fail(o.at("quantile"), "must lie in (0, 1)");
    b.settings.oracle_paths = static_cast<std::size_t>(o.uint("oracle_paths", 0));
    o.done();
    cfg.mdp = b;
  }
  if (top.has("lil")) {
    Obj o = top.obj("lil");
    LilBlock b;
    b.spec.regime = o.str("regime", "large-time", {"large-time", "small-time"}) == "large-time"
                        ? LilRegime::kLargeTime
                        : LilRegime::kSmallTime;
    b.spec.c = o.positive("c", std::exp(1.0));
    b.spec.j_min = o.integer("j_min", 4);
    b.spec.j_max = o.integer("j_max", 8);
    b.spec.horizon = o.positive("horizon", 1.0);
    b.spec.steps = o.count("steps", 100);
    b.settings.paths = o.count("paths", b.settings.paths);
    b.settings.distance_paths = static_cast<std::size_t>(o.uint("distance_paths", b.settings.distance_paths));
    b.settings.limit_set.energy_budget = o.positive("energy_budget", 1.0);
    b.settings.limit_set.method = cfg.scheme.method;
    b.center = o.numbers("center", x0, d);
    o.done();
    guarded("lil", [&] { b.spec.validate(); });
    cfg.lil = b;
  }
  if (top.has("diag")) {
    Obj o = top.obj("diag");
    DiagBlock b;
    b.hypotheses.clear();
    const json& hs = o.has("hypotheses") ? o.array("hypotheses") : json::array({"H1", "H2"});
    for (const auto& h : hs) {
      const std::string s = h.is_string() ? h.get<std::string>() : "";
      if (s == "H1")
        b.hypotheses.push_back(Hypothesis::kH1);
      else if (s == "H2")
        b.hypotheses.push_back(Hypothesis::kH2);
      else if (s == "B0")
        b.hypotheses.push_back(Hypothesis::kB0);
      else if (s == "B3")
        b.hypotheses.push_back(Hypothesis::kB3);
      else
        fail(o.at("hypotheses"), "entries must be H1, H2, B0 or B3");
      o.out("hypotheses").push_back(s);
    }
    Obj m = o.obj_or_empty("modulus");
    const auto mk = m.str("kind", "linear", {"linear", "log", "loglog"});
    if (mk == "linear")
      b.settings.modulus = Modulus::linear(m.positive("slope", 1.0));
    else if (mk == "log")
      b.settings.modulus = Modulus::log(m.positive("eta", 1e-2));
    else
      b.settings.modulus = Modulus::loglog(m.positive("eta", 1e-2));
    m.done();
    b.settings.constant = o.positive("constant", 1.0);
    b.settings.gradient_exponent = o.num("gradient_exponent", 0.0);
    b.settings.eps_grid = o.numbers("eps_grid", std::vector<double>{});
    b.samples = o.count("samples", b.samples);
    b.radius = o.positive("radius", b.radius);
    b.cloud_size = o.count("cloud_size", b.cloud_size);
    b.particles = o.count("particles", b.particles);
    b.graph_samples = o.count("graph_samples", b.graph_samples);
    o.done();
    cfg.diag = b;
  }
  top.done();

  cfg.canonical = canon;
  cfg.hash = fnv1a64(canon.dump());
  return cfg;
}

}  // namespace mvsde::cli
