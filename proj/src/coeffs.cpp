#include "mvsde/coeffs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mvsde/errors.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

// ---------------------------------------------------------------- Modulus

Modulus Modulus::linear(double slope) {
  if (!(slope > 0.0) || !std::isfinite(slope)) throw ConfigError("modulus: slope must be positive");
  return {Kind::kLinear, 0.0, slope};
}

Modulus Modulus::log(double eta) {
  if (!(eta > 0.0 && eta < std::exp(-1.0))) throw ConfigError("modulus: log cutoff must lie in (0, 1/e)");
  return {Kind::kLog, eta, 1.0};
}

Modulus Modulus::loglog(double eta) {
  if (!(eta > 0.0 && eta < std::exp(-1.0))) throw ConfigError("modulus: loglog cutoff must lie in (0, 1/e)");
  Modulus m{Kind::kLogLog, eta, 1.0};
  if (!(m.derivative_at_eta() > 0.0))
    throw ConfigError("modulus: loglog cutoff too large (non-increasing at the cutoff)");
  return m;
}

double Modulus::core(double u) const {
  if (u <= 0.0) return 0.0;
  const double l = -std::log(u);
  return kind_ == Kind::kLog ? u * l : u * l * std::log(l);
}

double Modulus::derivative_at_eta() const {
  switch (kind_) {
    case Kind::kLinear:
      return slope_;
    case Kind::kLog:
      return -std::log(eta_) - 1.0;
    case Kind::kLogLog: {
      const double l = -std::log(eta_);
      return l * std::log(l) - std::log(l) - 1.0;
    }
  }
  return 0.0;
}

double Modulus::operator()(double u) const {
  if (u < 0.0 || std::isnan(u)) throw ConfigError("modulus: argument must be nonnegative");
  if (kind_ == Kind::kLinear) return slope_ * u;
  if (u <= eta_) return core(u);
  return core(eta_) + derivative_at_eta() * (u - eta_);
}

double eval_modulus(const Modulus& rho, double u) { return rho(u); }

// ---------------------------------------------------------------- Drift

Drift Drift::affine(Point b0, Matrix b1, Matrix b2) {
  const std::size_t d = b0.size();
  if (d == 0 || b1.rows() != d || b1.cols() != d || b2.rows() != d || b2.cols() != d)
    throw ConfigError("affine drift: expected b0 (d), B1 (d x d), B2 (d x d)");
  if (!all_finite(b0) || !all_finite(b1.data()) || !all_finite(b2.data()))
    throw ConfigError("affine drift: non-finite parameter");
  Drift b;
  b.kind_ = Kind::kAffine;
  b.dim_ = d;
  b.name_ = "affine";
  b.b0_ = std::move(b0);
  b.b1_ = std::move(b1);
  b.b2_ = std::move(b2);
  b.extra_shift_.assign(d, 0.0);
  return b;
}

Drift Drift::callback(std::size_t dim, VectorField fn, std::optional<MatrixField> grad, std::string name) {
  if (dim == 0 || !fn) throw ConfigError("callback drift: dimension and function required");
  Drift b;
  b.kind_ = Kind::kCallback;
  b.dim_ = dim;
  b.name_ = std::move(name);
  b.fn_ = std::make_shared<const VectorField>(std::move(fn));
  b.grad_ = std::move(grad);
  b.extra_shift_.assign(dim, 0.0);
  return b;
}

void Drift::eval(std::span<const double> x, const MeasureView& mu, std::span<double> out) const {
  if (kind_ == Kind::kAffine) {
    for (std::size_t i = 0; i < dim_; ++i) {
      double s = b0_[i] + extra_shift_[i];
      for (std::size_t j = 0; j < dim_; ++j) s += b1_(i, j) * x[j] + b2_(i, j) * mu.mean[j];
      out[i] = s;
    }
    return;
  }
  (*fn_)(x, mu, out);
  for (std::size_t i = 0; i < dim_; ++i) out[i] += extra_shift_[i];
}

Point Drift::eval(std::span<const double> x, const MeasureView& mu) const {
  Point out(dim_);
  eval(x, mu, out);
  return out;
}

Matrix Drift::finite_difference_gradient(std::span<const double> x, const MeasureView& mu) const {
  const double h = 1e-5 * (1.0 + norm(x));
  Matrix g(dim_, dim_);
  Point xp(x.begin(), x.end()), xm(x.begin(), x.end()), fp(dim_), fm(dim_);
  for (std::size_t j = 0; j < dim_; ++j) {
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    eval(xp, mu, fp);
    eval(xm, mu, fm);
    for (std::size_t i = 0; i < dim_; ++i) g(i, j) = (fp[i] - fm[i]) / (2.0 * h);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return g;
}

Matrix Drift::gradient(std::span<const double> x, const MeasureView& mu) const {
  if (kind_ == Kind::kAffine) return b1_;
  if (grad_) {
    Matrix g(dim_, dim_);
    (*grad_)(x, mu, g.data());
    return g;
  }
  return finite_difference_gradient(x, mu);
}

Drift Drift::shifted(Point shift) const {
  if (shift.size() != dim_) throw ConfigError("Drift::shifted: dimension mismatch");
  Drift b = *this;
  for (std::size_t i = 0; i < dim_; ++i) b.extra_shift_[i] += shift[i];
  return b;
}

// ---------------------------------------------------------------- Diffusion

Diffusion Diffusion::scalar(std::size_t dim, double s0, double s1, double s2) {
  if (dim == 0 || !std::isfinite(s0) || !std::isfinite(s1) || !std::isfinite(s2))
    throw ConfigError("scalar diffusion: bad parameters");
  Diffusion s;
  s.kind_ = Kind::kScalar;
  s.dim_ = dim;
  s.name_ = "scalar";
  s.s0_ = s0;
  s.s1_ = s1;
  s.s2_ = s2;
  return s;
}

Diffusion Diffusion::constant(Matrix sigma) {
  if (sigma.rows() == 0 || sigma.rows() != sigma.cols() || !all_finite(sigma.data()))
    throw ConfigError("constant diffusion: expected a finite square matrix");
  Diffusion s;
  s.kind_ = Kind::kConstant;
  s.dim_ = sigma.rows();
  s.name_ = "constant";
  s.constant_ = std::move(sigma);
  return s;
}

Diffusion Diffusion::callback(std::size_t dim, MatrixField fn, std::string name) {
  if (dim == 0 || !fn) throw ConfigError("callback diffusion: dimension and function required");
  Diffusion s;
  s.kind_ = Kind::kCallback;
  s.dim_ = dim;
  s.name_ = std::move(name);
  s.fn_ = std::make_shared<const MatrixField>(std::move(fn));
  return s;
}

void Diffusion::eval_diagonal(std::span<const double> x, const MeasureView& mu, std::span<double> out) const {
  for (std::size_t i = 0; i < dim_; ++i) out[i] = s0_ + s1_ * x[i] + s2_ * mu.mean[i] + extra_identity_;
}

void Diffusion::eval(std::span<const double> x, const MeasureView& mu, std::span<double> out) const {
  switch (kind_) {
    case Kind::kScalar:
      std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(dim_ * dim_), 0.0);
      for (std::size_t i = 0; i < dim_; ++i) out[i * dim_ + i] = s0_ + s1_ * x[i] + s2_ * mu.mean[i];
      break;
    case Kind::kConstant:
      std::copy(constant_.data().begin(), constant_.data().end(), out.begin());
      break;
    case Kind::kCallback:
      (*fn_)(x, mu, out);
      break;
  }
  if (extra_identity_ != 0.0)
    for (std::size_t i = 0; i < dim_; ++i) out[i * dim_ + i] += extra_identity_;
}

Matrix Diffusion::eval(std::span<const double> x, const MeasureView& mu) const {
  Matrix m(dim_, dim_);
  eval(x, mu, m.data());
  return m;
}

Diffusion Diffusion::plus_identity(double c) const {
  Diffusion s = *this;
  s.extra_identity_ += c;
  return s;
}

// ---------------------------------------------------------------- PerturbationFamily

PerturbationFamily PerturbationFamily::constant(MeanFieldCoefficients base) {
  if (base.drift.dim() != base.diffusion.dim()) throw ConfigError("coefficients: drift/diffusion dimension mismatch");
  PerturbationFamily f;
  f.drift_shift_.assign(base.dim(), 0.0);
  f.base_ = std::move(base);
  f.constant_ = true;
  f.rho_b_ = [](double) { return 0.0; };
  f.rho_sigma_ = [](double) { return 0.0; };
  return f;
}

PerturbationFamily PerturbationFamily::shifted(MeanFieldCoefficients base, Point drift_shift,
                                               double diffusion_shift) {
  PerturbationFamily f = constant(std::move(base));
  if (drift_shift.size() != f.dim()) throw ConfigError("perturbation: drift shift dimension mismatch");
  if (!all_finite(drift_shift) || !std::isfinite(diffusion_shift))
    throw ConfigError("perturbation: non-finite shift");
  f.constant_ = norm(drift_shift) == 0.0 && diffusion_shift == 0.0;
  const double vb = norm(drift_shift);
  const double vs = std::abs(diffusion_shift) * std::sqrt(static_cast<double>(f.dim()));
  f.rho_b_ = [vb](double eps) { return eps * vb; };
  f.rho_sigma_ = [vs](double eps) { return eps * vs; };
  f.drift_shift_ = std::move(drift_shift);
  f.diffusion_shift_ = diffusion_shift;
  return f;
}

PerturbationFamily PerturbationFamily::custom(MeanFieldCoefficients base,
                                              std::function<MeanFieldCoefficients(double)> member,
                                              std::function<double(double)> rho_b,
                                              std::function<double(double)> rho_sigma) {
  PerturbationFamily f = constant(std::move(base));
  f.constant_ = false;
  f.member_ = std::move(member);
  f.rho_b_ = std::move(rho_b);
  f.rho_sigma_ = std::move(rho_sigma);
  return f;
}

MeanFieldCoefficients PerturbationFamily::at(double eps) const {
  if (eps == 0.0 || constant_) return base_;
  if (member_) return member_(eps);
  Point shift = drift_shift_;
  for (double& v : shift) v *= eps;
  return {base_.drift.shifted(std::move(shift)), base_.diffusion.plus_identity(eps * diffusion_shift_)};
}

// ---------------------------------------------------------------- hypotheses

std::string to_string(Hypothesis h) {
  switch (h) {
    case Hypothesis::kH1:
      return "H1";
    case Hypothesis::kH2:
      return "H2";
    case Hypothesis::kB0:
      return "B0";
    case Hypothesis::kB3:
      return "B3";
  }
  return "?";
}

std::vector<HypothesisSample> random_hypothesis_samples(std::size_t dim, std::size_t count, double radius,
                                                        std::size_t cloud_size, std::uint64_t seed) {
  std::vector<HypothesisSample> samples;
  samples.reserve(count);
  const CounterStream stream(RngSpec{seed, 0}, 0, StreamPurpose::kAuxiliary);
  std::uint64_t step = 0;
  auto draw_point = [&] {
    Point p(dim);
    for (std::size_t i = 0; i < dim; ++i) p[i] = radius * (2.0 * stream.uniform(step++) - 1.0);
    return p;
  };
  auto draw_cloud = [&] {
    std::vector<double> pts;
    const Point shift = draw_point();
    for (std::size_t k = 0; k < cloud_size; ++k) {
      const Point p = draw_point();
      for (std::size_t i = 0; i < dim; ++i) pts.push_back(0.5 * (p[i] + shift[i]));
    }
    return EmpiricalMeasure(dim, std::move(pts));
  };
  for (std::size_t s = 0; s < count; ++s) {
    Point x = draw_point();
    Point xp = draw_point();
    // Every fourth pair is close, to exercise the small-distance regime of the modulus.
    if (s % 4 == 3)
      for (std::size_t i = 0; i < dim; ++i) xp[i] = x[i] + 1e-3 * xp[i];
    EmpiricalMeasure mu = draw_cloud();
    EmpiricalMeasure nu = draw_cloud();
    samples.push_back({std::move(x), std::move(xp), std::move(mu), std::move(nu)});
  }
  return samples;
}

bool HypothesisReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const InequalityCheck& c) { return c.violations == 0; });
}

std::string HypothesisReport::summary() const {
  std::ostringstream os;
  os << to_string(which) << (ok() ? " ok" : " VIOLATED");
  for (const auto& c : checks)
    os << "; " << c.name << ": worst margin " << c.worst_margin << " (" << c.violations << " violations)";
  return os.str();
}

namespace {

class CheckAccumulator {
 public:
  explicit CheckAccumulator(std::string name) { check_.name = std::move(name); }
  void add(double lhs, double rhs, std::size_t sample) {
    const double margin = lhs - rhs;
    if (margin > check_.worst_margin) {
      check_.worst_margin = margin;
      check_.worst_sample = sample;
    }
    if (margin > 1e-12 * (1.0 + std::abs(rhs))) ++check_.violations;
  }
  InequalityCheck take() { return std::move(check_); }

 private:
  InequalityCheck check_;
};

}  // namespace

HypothesisReport check_hypotheses(const PerturbationFamily& coeffs, Hypothesis which,
                                  const HypothesisSettings& settings,
                                  const std::vector<HypothesisSample>& samples) {
  if (samples.empty()) throw ConfigError("check_hypotheses: no samples");
  const std::size_t d = coeffs.dim();
  const double big_l = settings.constant;
  const Modulus& rho = settings.modulus;

  std::vector<MeanFieldCoefficients> members{coeffs.base()};
  std::vector<double> member_eps{0.0};
  for (double eps : settings.eps_grid) {
    members.push_back(coeffs.at(eps));
    member_eps.push_back(eps);
  }

  HypothesisReport report;
  report.which = which;
  CheckAccumulator one_sided(which == Hypothesis::kH1 ? "one-sided modulus bound" : "one-sided Lipschitz bound");
  CheckAccumulator growth("growth bound");
  CheckAccumulator perturbation("perturbation bound");
  CheckAccumulator continuity(which == Hypothesis::kH2 ? "modulus continuity" : "Lipschitz continuity");
  CheckAccumulator grad_lipschitz("gradient Lipschitz bound");
  CheckAccumulator measure_lipschitz("measure Lipschitz bound");

  Point bx(d), bxp(d), bdiff(d);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& smp = samples[s];
    const MeasureView mu = MeasureView::of(smp.mu);
    const MeasureView nu = MeasureView::of(smp.nu);
    const double dx2 = [&] {
      const double r = distance(smp.x, smp.x_prime);
      return r * r;
    }();
    const double w2 = wasserstein2(smp.mu, smp.nu);
    const double w2sq = w2 * w2;
    const double mu_norm = std::sqrt(mu.second_moment);
    const double nu_norm = std::sqrt(nu.second_moment);

    for (std::size_t m = 0; m < members.size(); ++m) {
      const auto& c = members[m];
      switch (which) {
        case Hypothesis::kH1: {
          c.drift.eval(smp.x, mu, bx);
          c.drift.eval(smp.x_prime, nu, bxp);
          for (std::size_t i = 0; i < d; ++i) bdiff[i] = bx[i] - bxp[i];
          Point dxv(d);
          for (std::size_t i = 0; i < d; ++i) dxv[i] = smp.x[i] - smp.x_prime[i];
          one_sided.add(dot(dxv, bdiff), big_l * (rho(dx2) + rho(w2sq)), s);
          growth.add(norm(bx), big_l * (1.0 + norm(smp.x) + mu_norm), s);
          growth.add(norm(bxp), big_l * (1.0 + norm(smp.x_prime) + nu_norm), s);
          if (m > 0) {
            const Point base = coeffs.base().drift.eval(smp.x, mu);
            perturbation.add(distance(bx, base), coeffs.rho_b(member_eps[m]) * (1.0 + 1e-6), s);
          }
          break;
        }
        case Hypothesis::kH2:
        case Hypothesis::kB3: {
          const Matrix sx = c.diffusion.eval(smp.x, mu);
          const Matrix sxp = c.diffusion.eval(smp.x_prime, nu);
          const double diff = frobenius_distance(sx, sxp);
          const double rhs = which == Hypothesis::kH2 ? big_l * (rho(dx2) + rho(w2sq)) : big_l * (dx2 + w2sq);
          continuity.add(diff * diff, rhs, s);
          const double fx = frobenius(sx);
          growth.add(fx * fx, big_l * (1.0 + norm2(smp.x) + mu.second_moment), s);
          if (which == Hypothesis::kH2 && m > 0) {
            const Matrix base = coeffs.base().diffusion.eval(smp.x, mu);
            perturbation.add(frobenius_distance(sx, base), coeffs.rho_sigma(member_eps[m]) * (1.0 + 1e-6), s);
          }
          break;
        }
        case Hypothesis::kB0: {
          c.drift.eval(smp.x, mu, bx);
          c.drift.eval(smp.x_prime, mu, bxp);
          Point dxv(d);
          for (std::size_t i = 0; i < d; ++i) {
            dxv[i] = smp.x[i] - smp.x_prime[i];
            bdiff[i] = bx[i] - bxp[i];
          }
          one_sided.add(dot(dxv, bdiff), big_l * dx2, s);
          growth.add(norm(bx), big_l * (1.0 + norm(smp.x) + mu_norm), s);
          if (m == 0) {
            const Matrix gx = c.drift.gradient(smp.x, mu);
            const Matrix gxp = c.drift.gradient(smp.x_prime, mu);
            const double q = settings.gradient_exponent;
            grad_lipschitz.add(frobenius_distance(gx, gxp),
                               big_l * (1.0 + std::pow(norm(smp.x), q) + std::pow(norm(smp.x_prime), q)) *
                                   std::sqrt(dx2),
                               s);
            const Point bnu = c.drift.eval(smp.x, nu);
            measure_lipschitz.add(distance(bx, bnu), big_l * w2, s);
          }
          break;
        }
      }
    }
  }

  switch (which) {
    case Hypothesis::kH1:
      report.checks = {one_sided.take(), growth.take()};
      break;
    case Hypothesis::kH2:
      report.checks = {continuity.take(), growth.take()};
      break;
    case Hypothesis::kB0:
      report.checks = {grad_lipschitz.take(), one_sided.take(), measure_lipschitz.take(), growth.take()};
      break;
    case Hypothesis::kB3:
      report.checks = {continuity.take(), growth.take()};
      break;
  }
  if ((which == Hypothesis::kH1 || which == Hypothesis::kH2) && !settings.eps_grid.empty())
    report.checks.push_back(perturbation.take());
  return report;
}

}  // namespace mvsde
