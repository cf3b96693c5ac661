#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvsde/linalg.hpp"

namespace mvsde {

/// Closed half-space {x : <normal, x> <= offset}.
struct HalfSpace {
  Point normal;
  double offset = 0.0;
};

/// Closed convex set with nonempty interior. Every set carries a strictly interior
/// witness point, derived where possible and validated otherwise.
class ConvexSet {
 public:
  enum class Kind { kHalfSpace, kBox, kBall, kPolyhedron };

  static ConvexSet half_space(Point normal, double offset);
  /// Bounds may be +-infinity; lower < upper is required coordinatewise.
  static ConvexSet box(Point lower, Point upper);
  static ConvexSet whole_space(std::size_t dim);
  static ConvexSet ball(Point center, double radius);
  /// Intersection of half-spaces; the witness must satisfy every face strictly.
  static ConvexSet polyhedron(std::vector<HalfSpace> faces, Point interior_witness);

  Kind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  const Point& interior_witness() const { return witness_; }
  bool is_whole_space() const;

  const std::vector<HalfSpace>& faces() const { return faces_; }
  const Point& lower() const { return lower_; }
  const Point& upper() const { return upper_; }
  const Point& center() const { return center_; }
  double radius() const { return radius_; }

  /// Metric projection. Exact for half-space, box and ball; Dykstra iterations
  /// (converged to ~1e-14) for polyhedra. `out` may alias `x`.
  void project(std::span<const double> x, std::span<double> out) const;
  Point project(std::span<const double> x) const;
  double distance(std::span<const double> x) const;
  bool contains(std::span<const double> x, double tol = 0.0) const;
  /// Whether y lies in the normal cone N_C(x); requires x in C (within tol).
  bool normal_cone_contains(std::span<const double> x, std::span<const double> y,
                            double tol) const;

  ConvexSet translated(std::span<const double> shift) const;
  /// Image under y -> center + factor (y - center), factor > 0.
  ConvexSet radially_scaled(std::span<const double> center, double factor) const;

  std::string describe() const;

 private:
  ConvexSet() = default;

  Kind kind_ = Kind::kBox;
  std::size_t dim_ = 0;
  std::vector<HalfSpace> faces_;
  Point lower_, upper_;
  Point center_;
  double radius_ = 0.0;
  Point witness_;
};

/// Proper closed convex function from a small catalogue with closed-form
/// (or exactly bracketed) proximal maps.
class ConvexFn {
 public:
  enum class Kind { kAbsNorm, kQuadratic, kIndicator, kSum };

  /// weight * |x| (Euclidean norm).
  static ConvexFn abs_norm(std::size_t dim, double weight = 1.0);
  /// 0.5 <Qx, x> with Q symmetric positive semidefinite.
  static ConvexFn quadratic(Matrix q);
  static ConvexFn indicator(ConvexSet set);
  /// Sums of quadratics fold into one quadratic. Other sums have a proximal map only in 1-D.
  static ConvexFn sum(std::vector<ConvexFn> terms);

  Kind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  double weight() const { return weight_; }
  const Matrix& quadratic_form() const { return q_; }
  const std::vector<ConvexFn>& terms() const { return terms_; }
  const std::optional<ConvexSet>& indicator_set() const { return set_; }

  /// +infinity outside the effective domain.
  double value(std::span<const double> x) const;
  /// Closure of the effective domain.
  ConvexSet domain() const;
  bool has_prox() const;
  /// argmin_y f(y) + |y - x|^2 / (2 alpha). Throws UnsupportedError without has_prox().
  void prox(double alpha, std::span<const double> x, std::span<double> out) const;
  Point prox(double alpha, std::span<const double> x) const;
  /// Least-norm subgradient; throws DomainError outside the domain.
  Point min_norm_subgradient(std::span<const double> x) const;
  bool subgradient_contains(std::span<const double> x, std::span<const double> y,
                            double tol) const;

 private:
  ConvexFn() = default;
  /// 1-D subdifferential as a closed interval (possibly unbounded); empty when
  /// x is outside the domain (lo > hi).
  std::pair<double, double> subdiff_interval_1d(double x) const;
  double prox_1d_bracketed(double alpha, double x) const;

  Kind kind_ = Kind::kAbsNorm;
  std::size_t dim_ = 0;
  double weight_ = 0.0;
  Matrix q_;
  std::optional<ConvexSet> set_;
  std::vector<ConvexFn> terms_;
};

/// A maximal monotone graph on the real line: knots with vertical segments
/// [lower, upper], linear pieces between knots, sloped rays beyond the extreme
/// knots, or a vertical ray (domain boundary) when bounded on that side.
struct MonotoneGraph1D {
  struct Knot {
    double x = 0.0;
    double lower = 0.0;
    double upper = 0.0;
  };
  std::vector<Knot> knots;
  double left_slope = 0.0;
  double right_slope = 0.0;
  bool bounded_left = false;
  bool bounded_right = false;

  /// A(y) as a closed interval; lo > hi signals y outside the domain.
  std::pair<double, double> value_interval(double y) const;
  /// Exact solution of x in y + alpha A(y).
  double resolvent(double alpha, double x) const;
};

/// Maximal monotone operator built from a closed catalogue. Immutable and cheap
/// to copy (shared node).
class MonotoneOperator {
 public:
  enum class Kind { kZero, kNormalCone, kSubdifferential, kGraph1D, kScaled, kTranslated };

  static MonotoneOperator zero(std::size_t dim);
  static MonotoneOperator normal_cone(ConvexSet set);
  /// Rejects functions without a proximal map (construction-time UnsupportedError).
  static MonotoneOperator subdifferential(ConvexFn fn);
  static MonotoneOperator graph1d(MonotoneGraph1D graph);
  static MonotoneOperator scaled(MonotoneOperator base, double factor);
  static MonotoneOperator translated(MonotoneOperator base, Point shift);

  Kind kind() const;
  std::size_t dim() const;
  /// Closure of D(A).
  const ConvexSet& domain() const;
  const Point& interior_witness() const;
  std::string describe() const;

  /// When A is the normal cone of a set (possibly scaled/translated, or an
  /// indicator subdifferential), that set. Zero is the normal cone of R^d.
  std::optional<ConvexSet> as_normal_cone() const;
  bool is_zero() const;

  /// J^alpha(x) = (I + alpha A)^{-1} x. `out` may alias `x`.
  void resolvent(double alpha, std::span<const double> x, std::span<double> out) const;
  /// Whether (x, y) lies in Gr(A) within tol.
  bool graph_contains(std::span<const double> x, std::span<const double> y, double tol) const;
  /// Whether x lies in D(A) (which may be smaller than its closure for Graph1D).
  bool in_domain(std::span<const double> x, double tol = 0.0) const;
  Point minimal_section(std::span<const double> x) const;

  struct Node;

 private:
  explicit MonotoneOperator(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

Point resolvent(const MonotoneOperator& a, double alpha, std::span<const double> x);
/// Yosida approximation (x - J^alpha x) / alpha.
Point yosida(const MonotoneOperator& a, double alpha, std::span<const double> x);
/// Least-norm element of A(x); DomainError when x is not in D(A). For normal
/// cones this is 0 everywhere on the set.
Point minimal_section(const MonotoneOperator& a, std::span<const double> x);
/// inf_y f(y) + |y - x|^2 / (2 alpha).
double moreau_envelope(const ConvexFn& f, double alpha, std::span<const double> x);

struct ResolventConvergenceRow {
  double eps = 0.0;
  double sup_error = 0.0;
};

struct ResolventConvergenceReport {
  std::vector<ResolventConvergenceRow> rows;
  /// False when the sup-errors fail to decrease (weakly) along the eps grid.
  bool monotone_decreasing = true;
};

ResolventConvergenceReport check_resolvent_convergence(
    const std::function<MonotoneOperator(double)>& family, const MonotoneOperator& limit,
    double alpha, const std::vector<Point>& test_points, const std::vector<double>& eps_grid);

/// Local bound sup{|A^0_eps(x)| : |x - center| <= radius} over sampled points and
/// eps; infinite when some sample leaves D(A_eps).
double local_bound_diagnostic(const std::function<MonotoneOperator(double)>& family,
                              const std::vector<double>& eps_grid, std::span<const double> center,
                              double radius, std::size_t samples_per_axis = 5);

}  // namespace mvsde
