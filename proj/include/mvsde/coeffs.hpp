#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvsde/linalg.hpp"
#include "mvsde/measure.hpp"

namespace mvsde {

/// Concave modulus of continuity rho with rho(0) = 0. The log-type moduli are
/// u log(1/u) (and u log(1/u) log log(1/u)) on [0, eta], continued linearly above
/// eta with the left derivative at eta.
class Modulus {
 public:
  enum class Kind { kLinear, kLog, kLogLog };

  static Modulus linear(double slope = 1.0);
  static Modulus log(double eta = 1e-2);
  static Modulus loglog(double eta = 1e-2);

  Kind kind() const { return kind_; }
  double eta() const { return eta_; }
  double slope() const { return slope_; }
  /// Left derivative at eta (the slope of the linear continuation).
  double derivative_at_eta() const;
  double operator()(double u) const;

 private:
  Modulus(Kind kind, double eta, double slope) : kind_(kind), eta_(eta), slope_(slope) {}
  double core(double u) const;

  Kind kind_;
  double eta_;
  double slope_;
};

double eval_modulus(const Modulus& rho, double u);

using VectorField = std::function<void(std::span<const double> x, const MeasureView& mu,
                                       std::span<double> out)>;
/// Writes a d x d matrix row-major into `out`.
using MatrixField = std::function<void(std::span<const double> x, const MeasureView& mu,
                                       std::span<double> out)>;

/// Drift b(x, mu). Catalogue: affine b0 + B1 x + B2 mean(mu), plus callbacks.
class Drift {
 public:
  enum class Kind { kAffine, kCallback };

  static Drift affine(Point b0, Matrix b1, Matrix b2);
  /// Gradient in x is optional; without it, central differences are used.
  static Drift callback(std::size_t dim, VectorField fn, std::optional<MatrixField> grad = std::nullopt,
                        std::string name = "callback");

  Kind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  const std::string& name() const { return name_; }
  const Point& offset() const { return b0_; }
  const Matrix& state_matrix() const { return b1_; }
  const Matrix& mean_matrix() const { return b2_; }

  void eval(std::span<const double> x, const MeasureView& mu, std::span<double> out) const;
  Point eval(std::span<const double> x, const MeasureView& mu) const;
  bool has_gradient() const { return kind_ == Kind::kAffine || grad_.has_value(); }
  /// Jacobian in x (row-major d x d). Falls back to central differences with step
  /// 1e-5 (1 + |x|) when no closed form is available.
  Matrix gradient(std::span<const double> x, const MeasureView& mu) const;
  Matrix finite_difference_gradient(std::span<const double> x, const MeasureView& mu) const;
  /// b + shift (constant).
  Drift shifted(Point shift) const;

 private:
  Kind kind_ = Kind::kAffine;
  std::size_t dim_ = 0;
  std::string name_;
  Point b0_;
  Matrix b1_, b2_;
  std::shared_ptr<const VectorField> fn_;
  std::optional<MatrixField> grad_;
  Point extra_shift_;
};

/// Diffusion sigma(x, mu) (d x d). Catalogue: s0 I + s1 diag(x) + s2 diag(mean(mu)),
/// a constant matrix, plus callbacks.
class Diffusion {
 public:
  enum class Kind { kScalar, kConstant, kCallback };

  static Diffusion scalar(std::size_t dim, double s0, double s1 = 0.0, double s2 = 0.0);
  static Diffusion constant(Matrix sigma);
  static Diffusion callback(std::size_t dim, MatrixField fn, std::string name = "callback");

  Kind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  const std::string& name() const { return name_; }
  double s0() const { return s0_; }
  double s1() const { return s1_; }
  double s2() const { return s2_; }
  const Matrix& matrix() const { return constant_; }
  /// Diagonal diffusion whose entries depend only on (x, mean) can skip the full
  /// matrix product in the integrator.
  bool is_diagonal() const { return kind_ == Kind::kScalar; }

  void eval(std::span<const double> x, const MeasureView& mu, std::span<double> out) const;
  Matrix eval(std::span<const double> x, const MeasureView& mu) const;
  /// Diagonal entries for is_diagonal() kinds.
  void eval_diagonal(std::span<const double> x, const MeasureView& mu, std::span<double> out) const;
  /// sigma + c I.
  Diffusion plus_identity(double c) const;

 private:
  Kind kind_ = Kind::kScalar;
  std::size_t dim_ = 0;
  std::string name_;
  double s0_ = 0.0, s1_ = 0.0, s2_ = 0.0;
  Matrix constant_;
  std::shared_ptr<const MatrixField> fn_;
  double extra_identity_ = 0.0;
};

struct MeanFieldCoefficients {
  Drift drift;
  Diffusion diffusion;

  std::size_t dim() const { return drift.dim(); }
};

/// eps -> (b_eps, sigma_eps) with declared sup-deviation bounds rho_b(eps), rho_sigma(eps).
class PerturbationFamily {
 public:
  /// b_eps = b, sigma_eps = sigma.
  static PerturbationFamily constant(MeanFieldCoefficients base);
  /// b_eps = b + eps v, sigma_eps = sigma + eps c I; rho_b = eps |v|, rho_sigma = eps |c| sqrt(d).
  static PerturbationFamily shifted(MeanFieldCoefficients base, Point drift_shift, double diffusion_shift);
  static PerturbationFamily custom(MeanFieldCoefficients base,
                                   std::function<MeanFieldCoefficients(double)> member,
                                   std::function<double(double)> rho_b,
                                   std::function<double(double)> rho_sigma);

  const MeanFieldCoefficients& base() const { return base_; }
  std::size_t dim() const { return base_.dim(); }
  /// Member at eps; eps == 0 returns the base coefficients.
  MeanFieldCoefficients at(double eps) const;
  double rho_b(double eps) const { return eps == 0.0 ? 0.0 : rho_b_(eps); }
  double rho_sigma(double eps) const { return eps == 0.0 ? 0.0 : rho_sigma_(eps); }
  const Point& drift_shift() const { return drift_shift_; }
  double diffusion_shift() const { return diffusion_shift_; }
  bool is_constant() const { return constant_; }

 private:
  MeanFieldCoefficients base_;
  std::function<MeanFieldCoefficients(double)> member_;
  std::function<double(double)> rho_b_, rho_sigma_;
  Point drift_shift_;
  double diffusion_shift_ = 0.0;
  bool constant_ = false;
};

enum class Hypothesis { kH1, kH2, kB0, kB3 };

struct HypothesisSample {
  Point x, x_prime;
  EmpiricalMeasure mu, nu;
};

/// Random tuples with points in the ball of the given radius and clouds of the given size.
std::vector<HypothesisSample> random_hypothesis_samples(std::size_t dim, std::size_t count,
                                                        double radius, std::size_t cloud_size,
                                                        std::uint64_t seed);

struct InequalityCheck {
  std::string name;
  /// max over samples of lhs - rhs; positive means a violation.
  double worst_margin = -std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  std::size_t worst_sample = 0;
};

struct HypothesisReport {
  Hypothesis which = Hypothesis::kH1;
  std::vector<InequalityCheck> checks;
  bool ok() const;
  std::string summary() const;
};

struct HypothesisSettings {
  Modulus modulus = Modulus::linear(1.0);
  double constant = 1.0;          // L (H1/H2) or L' (B0/B3)
  double gradient_exponent = 0.0;  // q' in B0
  std::vector<double> eps_grid;   // perturbation members checked alongside the base
};

/// Sampled diagnostic for a hypothesis; never throws on violation.
HypothesisReport check_hypotheses(const PerturbationFamily& coeffs, Hypothesis which,
                                  const HypothesisSettings& settings,
                                  const std::vector<HypothesisSample>& samples);

std::string to_string(Hypothesis h);

}  // namespace mvsde
