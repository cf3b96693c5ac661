#include "mvsde/cli/commands.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mvsde/errors.hpp"

namespace mvsde::cli {

namespace fs = std::filesystem;

json number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

namespace {

json numbers(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

class Artifacts {
 public:
  Artifacts(std::string dir, const std::string& command, const ExperimentConfig& cfg)
      : dir_(std::move(dir)), command_(command), cfg_(cfg) {
    fs::create_directories(dir_);
  }

  std::ofstream open(const std::string& name, bool binary = false) {
    const std::string path = (fs::path(dir_) / name).string();
    std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
    if (!f) throw std::runtime_error("cannot write " + path);
    files_.push_back(path);
    return f;
  }

  json report_header() const {
    json r;
    r["schema_version"] = kSchemaVersion;
    r["command"] = command_;
    r["sweep_id"] = command_ + "-" + hash_hex(cfg_.hash);
    r["config_hash"] = hash_hex(cfg_.hash);
    r["config"] = cfg_.canonical;
    return r;
  }

  void write_report(const json& report) { open("report.json") << report.dump(2) << "\n"; }

  std::vector<std::string> files() const { return files_; }

 private:
  std::string dir_;
  std::string command_;
  const ExperimentConfig& cfg_;
  std::vector<std::string> files_;
};

std::string coord_header(const std::string& prefix, std::size_t d) {
  std::string s;
  for (std::size_t j = 0; j < d; ++j) s += "," + prefix + std::to_string(j);
  return s;
}

SimulationOptions make_options(const RunContext& ctx) {
  SimulationOptions o;
  o.workers = std::max<std::size_t>(1, ctx.threads);
  return o;
}

void cmd_simulate(const ExperimentConfig& cfg, const RunContext& ctx, Artifacts& art, std::ostream& log) {
  const SimulateBlock b = cfg.simulate.value_or(SimulateBlock{});
  if (cfg.problem.initial_cloud && cfg.problem.initial_cloud->size() != b.particles)
    throw ConfigError("field 'simulate.particles': must equal problem.initial_cloud.count");
  SimulationOptions opts = make_options(ctx);
  opts.record_every = b.record_every;
  const PathEnsemble ens = simulate(cfg.problem, cfg.scheme, b.particles, cfg.rng, opts);
  if (b.format != "binary") {
    auto f = art.open("ensemble.csv");
    write_ensemble_csv(ens, f);
  }
  if (b.format != "csv") {
    auto f = art.open("ensemble.bin", true);
    write_ensemble_binary(ens, f);
  }
  const EmpiricalMeasure terminal = ens.terminal_measure();
  json r = art.report_header();
  r["particles"] = ens.particles;
  r["steps"] = ens.steps;
  r["dt"] = ens.dt;
  r["method"] = to_string(ens.method);
  r["alpha"] = ens.alpha;
  r["terminal_mean"] = numbers(terminal.mean());
  r["terminal_second_moment"] = number(terminal.second_moment());
  r["max_domain_distance"] = number(ens.max_domain_distance);
  r["penalization_bound"] = number(ens.penalization_bound);
  r["warnings"] = ens.warnings;
  art.write_report(r);
  log << "simulated " << ens.particles << " particles over " << ens.steps << " steps\n";
}

void cmd_skeleton(const ExperimentConfig& cfg, const RunContext&, Artifacts& art, std::ostream& log) {
  const SkeletonBlock b = cfg.skeleton.value_or(SkeletonBlock{});
  const std::size_t d = cfg.problem.dim();
  const std::size_t steps = cfg.scheme.steps(cfg.problem.horizon);
  const SkeletonSolution limit = solve_limit_ode(cfg.problem, cfg.scheme);
  const ControlGrid h = b.control.empty() ? ControlGrid::zero(cfg.problem.horizon, steps, d)
                                          : ControlGrid(cfg.problem.horizon, steps, d, b.control);
  const SkeletonSolution sol =
      b.mdp ? solve_mdp_skeleton(cfg.problem, h, limit, cfg.scheme) : solve_skeleton(cfg.problem, h, limit, cfg.scheme);
  const std::string name = b.mdp ? "nu" : "y";
  {
    auto f = art.open("skeleton.csv");
    f << "time" << coord_header("x0_", d) << coord_header(name + "_", d) << coord_header("h_", d) << "\n";
    for (std::size_t n = 0; n <= steps; ++n) {
      f << fmt(limit.path.dt * static_cast<double>(n));
      for (double v : limit.path.state(n)) f << "," << fmt(v);
      for (double v : sol.path.state(n)) f << "," << fmt(v);
      for (std::size_t j = 0; j < d; ++j) f << "," << (n < steps ? fmt(h.value(n)[j]) : std::string());
      f << "\n";
    }
  }
  json r = art.report_header();
  r["equation"] = b.mdp ? "mdp-skeleton" : "skeleton";
  r["steps"] = steps;
  r["energy"] = number(energy(h));
  r["method"] = to_string(sol.method);
  r["terminal"] = numbers(sol.path.state(steps));
  r["limit_terminal"] = numbers(limit.path.state(steps));
  r["max_domain_distance"] = number(sol.max_domain_distance);
  art.write_report(r);
  log << (b.mdp ? "mdp skeleton" : "skeleton") << " solved on " << steps << " steps\n";
}

RateResult solve_rate(const ExperimentConfig& cfg, const RateTarget& target, RateSettings settings,
                      const RunContext& ctx) {
  RateProblem rp;
  rp.problem = cfg.problem;
  rp.target = target;
  rp.scheme = cfg.scheme;
  settings.workers = std::max<std::size_t>(1, ctx.threads);
  rp.settings = settings;
  return minimize_rate(rp);
}

void cmd_rate(const ExperimentConfig& cfg, const RunContext& ctx, Artifacts& art, std::ostream& log) {
  if (!cfg.rate) throw ConfigError("field 'rate': is required for the rate command");
  const RateResult res = solve_rate(cfg, cfg.rate->target, cfg.rate->settings, ctx);
  const std::size_t d = cfg.problem.dim();
  {
    auto f = art.open("rate_path.csv");
    f << "time" << coord_header("y", d) << coord_header("h", d) << "\n";
    const auto& p = res.path.path;
    for (std::size_t n = 0; n < p.points(); ++n) {
      f << fmt(p.dt * static_cast<double>(n));
      for (double v : p.state(n)) f << "," << fmt(v);
      for (std::size_t j = 0; j < d; ++j) f << "," << (n < res.h.steps() ? fmt(res.h.value(n)[j]) : std::string());
      f << "\n";
    }
  }
  json r = art.report_header();
  r["target"] = cfg.rate->target.describe();
  r["rate"] = number(res.rate);
  r["feasible"] = res.feasible;
  r["violation"] = number(res.violation);
  r["evaluations"] = res.evaluations;
  json starts = json::array();
  for (const auto& s : res.starts)
    starts.push_back({{"label", s.label},
                      {"energy", number(s.energy)},
                      {"violation", number(s.violation)},
                      {"feasible", s.feasible},
                      {"evaluations", s.evaluations}});
  r["starts"] = starts;
  art.write_report(r);
  log << "I* = " << res.rate << (res.feasible ? "" : " (no feasible start)") << "\n";
}

void cmd_ldp(const ExperimentConfig& cfg, const RunContext& ctx, Artifacts& art, std::ostream& log) {
  if (!cfg.ldp) throw ConfigError("field 'ldp_sweep': is required for the ldp-sweep command");
  LdpBlock b = *cfg.ldp;
  if (b.event.kind == RareEvent::Kind::kTubeExit) b.event.limit = solve_limit_ode(cfg.problem, cfg.scheme).path;

  std::optional<double> reference = b.reference_rate;
  std::string reference_source = reference ? "config" : "none";
  if (!reference && !b.event.complement) {
    const RateTarget target = b.event.kind == RareEvent::Kind::kHalfSpace
                                  ? RateTarget::half_space(b.event.normal, b.event.level)
                                  : RateTarget::tube_exit(b.event.delta);
    RateSettings settings;
    settings.seed = cfg.rng.seed;
    reference = solve_rate(cfg, target, settings, ctx).rate;
    reference_source = "minimize_rate";
  }
  const LdpTable table = ldp_sweep(cfg.problem, b.event, b.eps, b.paths, cfg.scheme, cfg.rng, make_options(ctx));
  {
    auto f = art.open("ldp.csv");
    f << "eps,paths,hits,p_hat,ci_low,ci_high,rate,rate_low,rate_high,usable\n";
    for (const auto& row : table.rows)
      f << fmt(row.eps) << "," << row.paths << "," << row.hits << "," << fmt(row.p_hat) << "," << fmt(row.ci_low)
        << "," << fmt(row.ci_high) << "," << fmt(row.rate) << "," << fmt(row.rate_low) << "," << fmt(row.rate_high)
        << "," << (row.usable ? 1 : 0) << "\n";
  }
  json r = art.report_header();
  r["event"] = table.event;
  json rows = json::array();
  for (const auto& row : table.rows)
    rows.push_back({{"eps", row.eps},
                    {"paths", row.paths},
                    {"hits", row.hits},
                    {"p_hat", number(row.p_hat)},
                    {"ci", {number(row.ci_low), number(row.ci_high)}},
                    {"rate", number(row.rate)},
                    {"rate_interval", {number(row.rate_low), number(row.rate_high)}},
                    {"usable", row.usable}});
  r["rows"] = rows;
  json oracle;
  oracle["reference_rate"] = reference ? number(*reference) : json(nullptr);
  oracle["source"] = reference_source;
  r["oracle"] = oracle;
  if (reference) {
    const RateFit fit = fit_rate(table, *reference);
    r["verdict"] = fit.verdict;
    r["extrapolated_rate"] = number(fit.extrapolated);
    r["extrapolation_skipped"] = fit.extrapolation_skipped;
    r["gaps"] = numbers(fit.gaps);
    log << "verdict: " << fit.verdict << "\n";
  } else {
    r["verdict"] = "undetermined";
  }
  r["warnings"] = table.warnings;
  art.write_report(r);
}

void cmd_mdp(const ExperimentConfig& cfg, const RunContext& ctx, Artifacts& art, std::ostream& log) {
  if (!cfg.mdp) throw ConfigError("field 'mdp_sweep': is required for the mdp-sweep command");
  const MdpBlock& b = *cfg.mdp;
  const MdpTable table = mdp_sweep(cfg.problem, power_lambda(b.lambda_exponent), b.eps, b.settings, b.paths,
                                   cfg.scheme, cfg.rng, make_options(ctx));
  {
    auto f = art.open("mdp.csv");
    f << "eps,lambda,value,std_error,oracle,relative_error\n";
    for (const auto& row : table.rows)
      f << fmt(row.eps) << "," << fmt(row.lambda) << "," << fmt(row.value) << "," << fmt(row.std_error) << ","
        << fmt(row.oracle) << "," << fmt(row.relative_error) << "\n";
  }
  json r = art.report_header();
  r["statistic"] = to_string(table.statistic);
  json rows = json::array();
  for (const auto& row : table.rows)
    rows.push_back({{"eps", row.eps},
                    {"lambda", number(row.lambda)},
                    {"value", number(row.value)},
                    {"std_error", number(row.std_error)},
                    {"relative_error", number(row.relative_error)}});
  r["rows"] = rows;
  r["oracle"] = {{"value", number(table.oracle)},
                 {"std_error", number(table.oracle_std_error)},
                 {"method", table.oracle_method}};
  r["verdict"] = table.converging ? "converging" : "not-converging";
  r["warnings"] = table.warnings;
  art.write_report(r);
  log << "mdp oracle " << table.oracle << " (" << table.oracle_method << ")\n";
}

void cmd_lil(const ExperimentConfig& cfg, const RunContext& ctx, Artifacts& art, std::ostream& log) {
  if (!cfg.lil) throw ConfigError("field 'lil': is required for the lil command");
  const LilBlock& b = *cfg.lil;
  const ContractionFamily family = ContractionFamily::radial(b.center);
  const LilReport rep =
      lil_harness(cfg.problem, b.spec, family, b.settings, cfg.rng, cfg.scheme.method, make_options(ctx));
  {
    auto f = art.open("lil.csv");
    f << "j,u,loglog,var_q1,var_std_error,var_oracle,z_score,max_abs_q1,dist_q10,dist_q50,dist_q90\n";
    for (const auto& row : rep.rows) {
      f << row.j << "," << fmt(row.u) << "," << fmt(row.loglog) << "," << fmt(row.var_q1) << ","
        << fmt(row.var_std_error) << "," << fmt(row.var_oracle) << "," << fmt(row.z_score) << ","
        << fmt(row.max_abs_q1);
      for (std::size_t k = 0; k < 3; ++k)
        f << "," << (k < row.distance_quantiles.size() ? fmt(row.distance_quantiles[k]) : std::string());
      f << "\n";
    }
  }
  json r = art.report_header();
  json rows = json::array();
  for (const auto& row : rep.rows)
    rows.push_back({{"j", row.j},
                    {"u", number(row.u)},
                    {"var_q1", number(row.var_q1)},
                    {"var_std_error", number(row.var_std_error)},
                    {"z_score", number(row.z_score)},
                    {"max_abs_q1", number(row.max_abs_q1)},
                    {"distance_quantiles", numbers(row.distance_quantiles)}});
  r["rows"] = rows;
  json oracle = json::array();
  for (const auto& row : rep.rows) oracle.push_back(number(row.var_oracle));
  r["oracle"] = {{"var_q1", oracle}, {"soft_bound", number(rep.soft_bound)}};
  r["verdict"] = rep.soft_bound_flagged ? "soft-bound-flagged" : "within-soft-bound";
  r["fraction_above_soft_bound"] = number(rep.fraction_above_soft_bound);
  r["notes"] = rep.notes;
  art.write_report(r);
  log << "lil: " << rep.rows.size() << " values of u\n";
}

void cmd_diag(const ExperimentConfig& cfg, const RunContext& ctx, Artifacts& art, std::ostream& log) {
  const DiagBlock b = cfg.diag.value_or(DiagBlock{});
  const std::size_t d = cfg.problem.dim();
  json r = art.report_header();

  const auto samples = random_hypothesis_samples(d, b.samples, b.radius, b.cloud_size, cfg.rng.seed);
  json hyps = json::array();
  for (Hypothesis h : b.hypotheses) {
    const HypothesisReport rep = check_hypotheses(cfg.problem.coeffs, h, b.settings, samples);
    json checks = json::array();
    for (const auto& c : rep.checks)
      checks.push_back({{"name", c.name},
                        {"worst_margin", number(c.worst_margin)},
                        {"violations", c.violations},
                        {"worst_sample", c.worst_sample}});
    hyps.push_back({{"hypothesis", to_string(h)}, {"ok", rep.ok()}, {"checks", checks}, {"summary", rep.summary()}});
  }
  r["hypotheses"] = hyps;

  // Graph samples (J z, z - J z) lie in Gr(A) for any z.
  const MonotoneOperator op = cfg.problem.operator_at(cfg.problem.eps);
  std::vector<GraphSample> graph;
  Point z(d);
  for (std::size_t s = 0; s < b.graph_samples; ++s) {
    CounterStream(cfg.rng, s, StreamPurpose::kAuxiliary).normals(0, z);
    for (std::size_t j = 0; j < d; ++j) z[j] = op.interior_witness()[j] + b.radius * z[j];
    GraphSample g;
    g.x = resolvent(op, 1.0, z);
    g.y.resize(d);
    for (std::size_t j = 0; j < d; ++j) g.y[j] = z[j] - g.x[j];
    graph.push_back(std::move(g));
  }
  SimulationOptions opts = make_options(ctx);
  opts.record_every = 1;
  SdeProblem p = cfg.problem;
  if (p.initial_cloud && p.initial_cloud->size() != b.particles) p.initial_cloud.reset();
  const PathEnsemble ens = simulate(p, cfg.scheme, b.particles, cfg.rng, opts);
  const MonotonicityReport mono = k_monotonicity_diag(ens, graph);
  r["k_monotonicity"] = {{"applicable", mono.applicable},
                         {"note", mono.note},
                         {"worst_margin", number(mono.worst_margin)},
                         {"worst_sum", number(mono.worst_sum)},
                         {"tolerance", number(mono.tolerance)},
                         {"violations", mono.violations}};
  std::vector<double> eps_grid = b.settings.eps_grid.empty() ? std::vector<double>{cfg.problem.eps} : b.settings.eps_grid;
  const SdeProblem& prob = cfg.problem;
  const double bound =
      local_bound_diagnostic([&prob](double e) { return prob.operator_at(e); }, eps_grid, Point(d, 0.0), 1.0);
  r["local_bound_at_origin"] = number(bound);
  r["penalization"] = {{"max_domain_distance", number(ens.max_domain_distance)},
                       {"penalization_bound", number(ens.penalization_bound)}};
  bool ok = mono.violations == 0;
  for (const auto& h : hyps) ok = ok && h["ok"].get<bool>();
  r["verdict"] = ok ? "ok" : "violations";
  art.write_report(r);
  log << "diag: " << (ok ? "ok" : "violations found") << "\n";
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string resolve_output_dir(const std::string& command, const ExperimentConfig& cfg, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  const char* root = std::getenv("MVSDE_OUT_ROOT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("mvsde-runs");
  return (base / (command + "-" + hash_hex(cfg.hash))).string();
}

std::vector<std::string> run_command(const std::string& command, const ExperimentConfig& cfg, const RunContext& ctx,
                                     std::ostream& log) {
  Artifacts art(ctx.output_dir, command, cfg);
  if (command == "simulate")
    cmd_simulate(cfg, ctx, art, log);
  else if (command == "skeleton")
    cmd_skeleton(cfg, ctx, art, log);
  else if (command == "rate")
    cmd_rate(cfg, ctx, art, log);
  else if (command == "ldp-sweep")
    cmd_ldp(cfg, ctx, art, log);
  else if (command == "mdp-sweep")
    cmd_mdp(cfg, ctx, art, log);
  else if (command == "lil")
    cmd_lil(cfg, ctx, art, log);
  else if (command == "diag")
    cmd_diag(cfg, ctx, art, log);
  else
    throw ConfigError("unknown command '" + command + "'");
  return art.files();
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multivalued McKean-Vlasov SDE laboratory"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment configuration (JSON)")->required();
    sub->add_option("--set", sets, "override, key=value (repeatable)");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "master seed (overrides rng.seed)");
    sub->add_option("--threads", threads, "worker threads (speed only)")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  ExperimentConfig cfg;
  try {
    std::ifstream f(config_path);
    if (!f) throw ConfigError("cannot read config file '" + config_path + "'");
    json raw = json::parse(f, nullptr, true, /*ignore_comments=*/true);
    for (const auto& s : sets) apply_override(raw, s);
    if (seed) raw["rng"]["seed"] = *seed;
    cfg = parse_config(raw);
  } catch (const json::exception& e) {
    err << "error: malformed config: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  RunContext ctx;
  ctx.threads = threads;
  ctx.output_dir = resolve_output_dir(command, cfg, out_dir);
  const auto start = std::chrono::steady_clock::now();
  int status = 0;
  std::string message;
  try {
    const auto files = run_command(command, cfg, ctx, out);
    for (const auto& file : files) out << "wrote " << file << "\n";
  } catch (const ConfigError& e) {
    status = 1;
    message = e.what();
  } catch (const DomainError& e) {
    status = 1;
    message = e.what();
  } catch (const std::exception& e) {
    status = 2;
    message = e.what();
  }
  if (status != 0) err << "error: " << message << "\n";
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  try {
    fs::create_directories(ctx.output_dir);
    std::ofstream manifest(fs::path(ctx.output_dir) / "manifest.jsonl", std::ios::app);
    json line = {{"timestamp", timestamp()},
                 {"command", command},
                 {"config_hash", hash_hex(cfg.hash)},
                 {"seed", cfg.rng.seed},
                 {"duration_s", seconds},
                 {"threads", threads},
                 {"exit", status}};
    manifest << line.dump() << "\n";
  } catch (const std::exception& e) {
    err << "warning: could not append manifest: " << e.what() << "\n";
  }
  return status;
}

}  // namespace mvsde::cli
