#include "mvsde/monotone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mvsde/errors.hpp"

namespace mvsde {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_dim(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got)
    throw ConfigError(std::string(what) + ": dimension mismatch (expected " +
                      std::to_string(expected) + ", got " + std::to_string(got) + ")");
}

void require_finite(std::span<const double> v, const char* what) {
  if (!all_finite(v)) throw ConfigError(std::string(what) + ": non-finite entry");
}

double strict_margin(const HalfSpace& h, std::span<const double> x) {
  return h.offset - dot(h.normal, x);
}

void project_half_space(const HalfSpace& h, std::span<double> x) {
  const double excess = dot(h.normal, x) - h.offset;
  if (excess <= 0.0) return;
  const double scale = excess / norm2(h.normal);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] -= scale * h.normal[i];
}

// Dykstra's alternating projections onto an intersection of half-spaces.
void project_polyhedron(const std::vector<HalfSpace>& faces, std::span<double> x) {
  bool inside = true;
  for (const auto& f : faces)
    if (dot(f.normal, x) > f.offset) inside = false;
  if (inside) return;

  const std::size_t d = x.size();
  std::vector<Point> increments(faces.size(), Point(d, 0.0));
  Point y(x.begin(), x.end());
  Point prev(d);
  Point tmp(d);
  for (int iter = 0; iter < 100000; ++iter) {
    prev = y;
    for (std::size_t k = 0; k < faces.size(); ++k) {
      for (std::size_t i = 0; i < d; ++i) tmp[i] = y[i] + increments[k][i];
      Point projected = tmp;
      project_half_space(faces[k], projected);
      for (std::size_t i = 0; i < d; ++i) increments[k][i] = tmp[i] - projected[i];
      y = projected;
    }
    if (distance(y, prev) <= 1e-15 * (1.0 + norm(y))) break;
  }
  // Clean up residual infeasibility from the finite iteration count.
  for (const auto& f : faces) project_half_space(f, y);
  std::copy(y.begin(), y.end(), x.begin());
}

// A one-dimensional convex set as [lo, hi].
std::pair<double, double> interval_1d(const ConvexSet& set) {
  switch (set.kind()) {
    case ConvexSet::Kind::kBox:
      return {set.lower()[0], set.upper()[0]};
    case ConvexSet::Kind::kBall:
      return {set.center()[0] - set.radius(), set.center()[0] + set.radius()};
    default: {
      double lo = -kInf, hi = kInf;
      for (const auto& f : set.faces()) {
        const double bound = f.offset / f.normal[0];
        if (f.normal[0] > 0.0)
          hi = std::min(hi, bound);
        else
          lo = std::max(lo, bound);
      }
      return {lo, hi};
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- ConvexSet

ConvexSet ConvexSet::half_space(Point normal, double offset) {
  require_finite(normal, "half_space normal");
  const double nn = norm2(normal);
  if (!(nn > 0.0) || !std::isfinite(offset)) throw ConfigError("half_space: zero normal or bad offset");
  ConvexSet s;
  s.kind_ = Kind::kHalfSpace;
  s.dim_ = normal.size();
  s.witness_.resize(s.dim_);
  for (std::size_t i = 0; i < s.dim_; ++i) s.witness_[i] = normal[i] * (offset - 1.0) / nn;
  s.faces_.push_back({std::move(normal), offset});
  return s;
}

ConvexSet ConvexSet::box(Point lower, Point upper) {
  if (lower.size() != upper.size() || lower.empty()) throw ConfigError("box: bound size mismatch");
  ConvexSet s;
  s.kind_ = Kind::kBox;
  s.dim_ = lower.size();
  s.witness_.resize(s.dim_);
  for (std::size_t i = 0; i < s.dim_; ++i) {
    const double lo = lower[i], hi = upper[i];
    if (std::isnan(lo) || std::isnan(hi) || !(lo < hi) || lo == kInf || hi == -kInf)
      throw ConfigError("box: coordinate " + std::to_string(i) + " has empty interior");
    if (std::isfinite(lo) && std::isfinite(hi))
      s.witness_[i] = 0.5 * (lo + hi);
    else if (std::isfinite(lo))
      s.witness_[i] = lo + 1.0;
    else if (std::isfinite(hi))
      s.witness_[i] = hi - 1.0;
    else
      s.witness_[i] = 0.0;
  }
  s.lower_ = std::move(lower);
  s.upper_ = std::move(upper);
  return s;
}

ConvexSet ConvexSet::whole_space(std::size_t dim) {
  return box(Point(dim, -kInf), Point(dim, kInf));
}

ConvexSet ConvexSet::ball(Point center, double radius) {
  require_finite(center, "ball center");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ConfigError("ball: radius must be positive");
  ConvexSet s;
  s.kind_ = Kind::kBall;
  s.dim_ = center.size();
  s.witness_ = center;
  s.center_ = std::move(center);
  s.radius_ = radius;
  return s;
}

ConvexSet ConvexSet::polyhedron(std::vector<HalfSpace> faces, Point interior_witness) {
  if (faces.empty()) throw ConfigError("polyhedron: no faces");
  const std::size_t d = interior_witness.size();
  require_finite(interior_witness, "polyhedron witness");
  for (const auto& f : faces) {
    require_dim(d, f.normal.size(), "polyhedron face");
    require_finite(f.normal, "polyhedron face normal");
    if (!(norm2(f.normal) > 0.0)) throw ConfigError("polyhedron: zero face normal");
    if (!(strict_margin(f, interior_witness) > 1e-12))
      throw ConfigError("polyhedron: witness is not strictly interior");
  }
  ConvexSet s;
  s.kind_ = Kind::kPolyhedron;
  s.dim_ = d;
  s.faces_ = std::move(faces);
  s.witness_ = std::move(interior_witness);
  return s;
}

bool ConvexSet::is_whole_space() const {
  if (kind_ != Kind::kBox) return false;
  for (std::size_t i = 0; i < dim_; ++i)
    if (std::isfinite(lower_[i]) || std::isfinite(upper_[i])) return false;
  return true;
}

void ConvexSet::project(std::span<const double> x, std::span<double> out) const {
  if (out.data() != x.data()) std::copy(x.begin(), x.end(), out.begin());
  switch (kind_) {
    case Kind::kHalfSpace:
      project_half_space(faces_.front(), out);
      break;
    case Kind::kBox:
      for (std::size_t i = 0; i < dim_; ++i) out[i] = std::clamp(out[i], lower_[i], upper_[i]);
      break;
    case Kind::kBall: {
      const double r = mvsde::distance(out, center_);
      if (r > radius_) {
        const double f = radius_ / r;
        for (std::size_t i = 0; i < dim_; ++i) out[i] = center_[i] + f * (out[i] - center_[i]);
      }
      break;
    }
    case Kind::kPolyhedron:
      project_polyhedron(faces_, out);
      break;
  }
}

Point ConvexSet::project(std::span<const double> x) const {
  Point out(x.size());
  project(x, out);
  return out;
}

double ConvexSet::distance(std::span<const double> x) const {
  return mvsde::distance(x, project(x));
}

bool ConvexSet::contains(std::span<const double> x, double tol) const {
  switch (kind_) {
    case Kind::kHalfSpace:
    case Kind::kPolyhedron:
      for (const auto& f : faces_)
        if ((dot(f.normal, x) - f.offset) / std::sqrt(norm2(f.normal)) > tol) return false;
      return true;
    case Kind::kBox:
      for (std::size_t i = 0; i < dim_; ++i)
        if (x[i] < lower_[i] - tol || x[i] > upper_[i] + tol) return false;
      return true;
    case Kind::kBall:
      return mvsde::distance(x, center_) <= radius_ + tol;
  }
  return false;
}

bool ConvexSet::normal_cone_contains(std::span<const double> x, std::span<const double> y,
                                     double tol) const {
  if (!contains(x, tol)) return false;
  // y in N_C(x) iff proj(x + y) = x.
  Point shifted(x.begin(), x.end());
  for (std::size_t i = 0; i < dim_; ++i) shifted[i] += y[i];
  const Point p = project(shifted);
  return mvsde::distance(p, x) <= tol * (1.0 + norm(y));
}

ConvexSet ConvexSet::translated(std::span<const double> shift) const {
  require_dim(dim_, shift.size(), "ConvexSet::translated");
  switch (kind_) {
    case Kind::kHalfSpace: {
      const auto& f = faces_.front();
      return half_space(f.normal, f.offset + dot(f.normal, shift));
    }
    case Kind::kBox: {
      Point lo = lower_, hi = upper_;
      for (std::size_t i = 0; i < dim_; ++i) {
        lo[i] += shift[i];
        hi[i] += shift[i];
      }
      return box(lo, hi);
    }
    case Kind::kBall: {
      Point c = center_;
      for (std::size_t i = 0; i < dim_; ++i) c[i] += shift[i];
      return ball(c, radius_);
    }
    case Kind::kPolyhedron: {
      auto faces = faces_;
      for (auto& f : faces) f.offset += dot(f.normal, shift);
      Point w = witness_;
      for (std::size_t i = 0; i < dim_; ++i) w[i] += shift[i];
      return polyhedron(std::move(faces), std::move(w));
    }
  }
  return *this;
}

ConvexSet ConvexSet::radially_scaled(std::span<const double> center, double factor) const {
  require_dim(dim_, center.size(), "ConvexSet::radially_scaled");
  if (!(factor > 0.0)) throw ConfigError("radially_scaled: factor must be positive");
  auto map = [&](std::span<const double> p) {
    Point out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) out[i] = center[i] + factor * (p[i] - center[i]);
    return out;
  };
  // <n, c + f (y - c)> <= o  <=>  <n, y> <= (o - <n, c>) / f + <n, c>  for the preimage;
  // the image of {<n, y> <= o} is {<n, z> <= <n, c> + f (o - <n, c>)}.
  auto scale_face = [&](const HalfSpace& h) {
    const double nc = dot(h.normal, center);
    return HalfSpace{h.normal, nc + factor * (h.offset - nc)};
  };
  switch (kind_) {
    case Kind::kHalfSpace: {
      const auto f = scale_face(faces_.front());
      return half_space(f.normal, f.offset);
    }
    case Kind::kBox: {
      Point lo(dim_), hi(dim_);
      for (std::size_t i = 0; i < dim_; ++i) {
        lo[i] = std::isfinite(lower_[i]) ? center[i] + factor * (lower_[i] - center[i]) : lower_[i];
        hi[i] = std::isfinite(upper_[i]) ? center[i] + factor * (upper_[i] - center[i]) : upper_[i];
      }
      return box(lo, hi);
    }
    case Kind::kBall:
      return ball(map(center_), factor * radius_);
    case Kind::kPolyhedron: {
      std::vector<HalfSpace> faces;
      for (const auto& f : faces_) faces.push_back(scale_face(f));
      return polyhedron(std::move(faces), map(witness_));
    }
  }
  return *this;
}

std::string ConvexSet::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::kHalfSpace:
      os << "half-space(d=" << dim_ << ", offset=" << faces_.front().offset << ")";
      break;
    case Kind::kBox:
      os << (is_whole_space() ? "whole-space" : "box") << "(d=" << dim_ << ")";
      break;
    case Kind::kBall:
      os << "ball(d=" << dim_ << ", r=" << radius_ << ")";
      break;
    case Kind::kPolyhedron:
      os << "polyhedron(d=" << dim_ << ", faces=" << faces_.size() << ")";
      break;
  }
  return os.str();
}

// ---------------------------------------------------------------- ConvexFn

ConvexFn ConvexFn::abs_norm(std::size_t dim, double weight) {
  if (dim == 0 || !(weight >= 0.0) || !std::isfinite(weight))
    throw ConfigError("abs_norm: weight must be nonnegative and finite");
  ConvexFn f;
  f.kind_ = Kind::kAbsNorm;
  f.dim_ = dim;
  f.weight_ = weight;
  return f;
}

ConvexFn ConvexFn::quadratic(Matrix q) {
  const std::size_t d = q.rows();
  if (d == 0 || q.cols() != d) throw ConfigError("quadratic: Q must be square");
  require_finite(q.data(), "quadratic Q");
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(q(i, j) - q(j, i)) > 1e-12 * (1.0 + std::abs(q(i, j))))
        throw ConfigError("quadratic: Q must be symmetric");
  // PSD check via Cholesky of Q + tiny shift.
  Matrix l(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    double s = q(j, j) + 1e-12;
    for (std::size_t k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
    if (s < 0.0) throw ConfigError("quadratic: Q must be positive semidefinite");
    l(j, j) = std::sqrt(s);
    for (std::size_t i = j + 1; i < d; ++i) {
      double t = q(i, j);
      for (std::size_t k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
      l(i, j) = l(j, j) > 0.0 ? t / l(j, j) : 0.0;
    }
  }
  ConvexFn f;
  f.kind_ = Kind::kQuadratic;
  f.dim_ = d;
  f.q_ = std::move(q);
  return f;
}

ConvexFn ConvexFn::indicator(ConvexSet set) {
  ConvexFn f;
  f.kind_ = Kind::kIndicator;
  f.dim_ = set.dim();
  f.set_ = std::move(set);
  return f;
}

ConvexFn ConvexFn::sum(std::vector<ConvexFn> terms) {
  if (terms.empty()) throw ConfigError("sum: no terms");
  // Flatten nested sums.
  std::vector<ConvexFn> flat;
  for (auto& t : terms) {
    if (t.kind_ == Kind::kSum)
      flat.insert(flat.end(), t.terms_.begin(), t.terms_.end());
    else
      flat.push_back(std::move(t));
  }
  const std::size_t d = flat.front().dim_;
  for (const auto& t : flat) require_dim(d, t.dim_, "sum term");
  if (flat.size() == 1) return flat.front();
  if (std::all_of(flat.begin(), flat.end(), [](const ConvexFn& t) { return t.kind_ == Kind::kQuadratic; })) {
    Matrix q(d, d);
    for (const auto& t : flat)
      for (std::size_t i = 0; i < d * d; ++i) q.data()[i] += t.q_.data()[i];
    return quadratic(std::move(q));
  }
  std::size_t indicators = 0;
  for (const auto& t : flat)
    if (t.kind_ == Kind::kIndicator) ++indicators;
  if (indicators > 1) throw UnsupportedError("sum: at most one indicator term is supported");
  ConvexFn f;
  f.kind_ = Kind::kSum;
  f.dim_ = d;
  f.terms_ = std::move(flat);
  return f;
}

double ConvexFn::value(std::span<const double> x) const {
  switch (kind_) {
    case Kind::kAbsNorm:
      return weight_ * norm(x);
    case Kind::kQuadratic: {
      Point qx = matvec(q_, x);
      return 0.5 * dot(qx, x);
    }
    case Kind::kIndicator:
      return set_->contains(x) ? 0.0 : kInf;
    case Kind::kSum: {
      double s = 0.0;
      for (const auto& t : terms_) s += t.value(x);
      return s;
    }
  }
  return kInf;
}

ConvexSet ConvexFn::domain() const {
  switch (kind_) {
    case Kind::kIndicator:
      return *set_;
    case Kind::kSum:
      for (const auto& t : terms_)
        if (t.kind_ == Kind::kIndicator) return *t.set_;
      [[fallthrough]];
    default:
      return ConvexSet::whole_space(dim_);
  }
}

bool ConvexFn::has_prox() const { return kind_ != Kind::kSum || dim_ == 1; }

std::pair<double, double> ConvexFn::subdiff_interval_1d(double x) const {
  switch (kind_) {
    case Kind::kAbsNorm:
      if (x > 0.0) return {weight_, weight_};
      if (x < 0.0) return {-weight_, -weight_};
      return {-weight_, weight_};
    case Kind::kQuadratic:
      return {q_(0, 0) * x, q_(0, 0) * x};
    case Kind::kIndicator: {
      const auto [lo, hi] = interval_1d(*set_);
      if (x < lo || x > hi) return {1.0, -1.0};
      return {x == lo ? -kInf : 0.0, x == hi ? kInf : 0.0};
    }
    case Kind::kSum: {
      double a = 0.0, b = 0.0;
      for (const auto& t : terms_) {
        const auto [ta, tb] = t.subdiff_interval_1d(x);
        if (ta > tb) return {1.0, -1.0};
        a += ta;
        b += tb;
      }
      return {a, b};
    }
  }
  return {1.0, -1.0};
}

double ConvexFn::prox_1d_bracketed(double alpha, double x) const {
  // y solves x in y + alpha * df(y); the map y -> y + alpha * df(y) is strictly
  // increasing, so bisect on which side of x its interval lies.
  const auto [lo, hi] = interval_1d(domain());
  auto side = [&](double y) {
    const auto [a, b] = subdiff_interval_1d(y);
    if (y + alpha * b < x) return -1;  // y too small
    if (y + alpha * a > x) return 1;   // y too large
    return 0;
  };
  // Bracket around x.
  double width = 1.0 + std::abs(x);
  double left = std::max(lo, x - width), right = std::min(hi, x + width);
  while (left > lo && side(left) > 0) {
    width *= 2.0;
    left = std::max(lo, x - width);
  }
  while (right < hi && side(right) < 0) {
    width *= 2.0;
    right = std::min(hi, x + width);
  }
  if (side(left) >= 0) return left;
  if (side(right) <= 0) return right;
  // Norm terms kink at 0.
  if (left < 0.0 && 0.0 < right && side(0.0) == 0) return 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (left + right);
    if (mid <= left || mid >= right) break;
    const int s = side(mid);
    if (s == 0) return mid;
    (s < 0 ? left : right) = mid;
  }
  return 0.5 * (left + right);
}

void ConvexFn::prox(double alpha, std::span<const double> x, std::span<double> out) const {
  if (!(alpha > 0.0)) throw ConfigError("prox: alpha must be positive");
  switch (kind_) {
    case Kind::kAbsNorm: {
      const double r = norm(x);
      const double t = alpha * weight_;
      const double f = r > t ? (r - t) / r : 0.0;
      for (std::size_t i = 0; i < dim_; ++i) out[i] = f * x[i];
      return;
    }
    case Kind::kQuadratic: {
      Matrix m = Matrix::identity(dim_);
      for (std::size_t i = 0; i < dim_ * dim_; ++i) m.data()[i] += alpha * q_.data()[i];
      const Point y = solve_linear(std::move(m), Point(x.begin(), x.end()));
      std::copy(y.begin(), y.end(), out.begin());
      return;
    }
    case Kind::kIndicator:
      set_->project(x, out);
      return;
    case Kind::kSum:
      if (dim_ != 1) throw UnsupportedError("prox: sums are supported in one dimension only");
      out[0] = prox_1d_bracketed(alpha, x[0]);
      return;
  }
}

Point ConvexFn::prox(double alpha, std::span<const double> x) const {
  Point out(dim_);
  prox(alpha, x, out);
  return out;
}

Point ConvexFn::min_norm_subgradient(std::span<const double> x) const {
  require_dim(dim_, x.size(), "min_norm_subgradient");
  switch (kind_) {
    case Kind::kAbsNorm: {
      const double r = norm(x);
      Point g(dim_, 0.0);
      if (r > 0.0)
        for (std::size_t i = 0; i < dim_; ++i) g[i] = weight_ * x[i] / r;
      return g;
    }
    case Kind::kQuadratic:
      return matvec(q_, x);
    case Kind::kIndicator:
      if (!set_->contains(x)) throw DomainError("min_norm_subgradient: point outside the set");
      return Point(dim_, 0.0);
    case Kind::kSum: {
      if (dim_ != 1) throw UnsupportedError("min_norm_subgradient: sums are 1-D only");
      const auto [a, b] = subdiff_interval_1d(x[0]);
      if (a > b) throw DomainError("min_norm_subgradient: point outside the domain");
      return Point{std::clamp(0.0, a, b)};
    }
  }
  return {};
}

bool ConvexFn::subgradient_contains(std::span<const double> x, std::span<const double> y,
                                    double tol) const {
  switch (kind_) {
    case Kind::kAbsNorm: {
      const double r = norm(x);
      if (r == 0.0) return norm(y) <= weight_ + tol;
      double err = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) err += std::pow(y[i] - weight_ * x[i] / r, 2);
      return std::sqrt(err) <= tol;
    }
    case Kind::kQuadratic:
      return mvsde::distance(matvec(q_, x), y) <= tol;
    case Kind::kIndicator:
      return set_->normal_cone_contains(x, y, tol);
    case Kind::kSum: {
      if (dim_ != 1) throw UnsupportedError("subgradient_contains: sums are 1-D only");
      // Boundary points of an indicator are decided with tolerance on x as well.
      const double xs = domain().project(x)[0];
      if (std::abs(xs - x[0]) > tol) return false;
      const auto [a, b] = subdiff_interval_1d(xs);
      return y[0] >= a - tol && y[0] <= b + tol;
    }
  }
  return false;
}

// ---------------------------------------------------------------- Graph1D

std::pair<double, double> MonotoneGraph1D::value_interval(double y) const {
  const auto& first = knots.front();
  const auto& last = knots.back();
  if (y < first.x) {
    if (bounded_left) return {1.0, -1.0};
    const double v = first.lower + left_slope * (y - first.x);
    return {v, v};
  }
  if (y > last.x) {
    if (bounded_right) return {1.0, -1.0};
    const double v = last.upper + right_slope * (y - last.x);
    return {v, v};
  }
  for (std::size_t k = 0; k < knots.size(); ++k) {
    const auto& kn = knots[k];
    if (y == kn.x) {
      const double lo = (k == 0 && bounded_left) ? -kInf : kn.lower;
      const double hi = (k + 1 == knots.size() && bounded_right) ? kInf : kn.upper;
      return {lo, hi};
    }
    if (k + 1 < knots.size() && y < knots[k + 1].x) {
      const auto& nx = knots[k + 1];
      const double v = kn.upper + (nx.lower - kn.upper) * (y - kn.x) / (nx.x - kn.x);
      return {v, v};
    }
  }
  return {1.0, -1.0};
}

double MonotoneGraph1D::resolvent(double alpha, double x) const {
  const auto& first = knots.front();
  // Left ray (or the vertical ray at a bounded left end).
  if (bounded_left) {
    if (x <= first.x + alpha * first.upper) return first.x;
  } else if (x < first.x + alpha * first.lower) {
    return (x - alpha * first.lower + alpha * left_slope * first.x) / (1.0 + alpha * left_slope);
  }
  for (std::size_t k = 0; k < knots.size(); ++k) {
    const auto& kn = knots[k];
    const double lo = kn.x + alpha * kn.lower;
    const double hi = kn.x + alpha * kn.upper;
    if ((k > 0 || !bounded_left) && x >= lo && x <= hi) return kn.x;
    if (k + 1 == knots.size()) break;
    const auto& nx = knots[k + 1];
    const double next_lo = nx.x + alpha * nx.lower;
    if (x > hi && x < next_lo) {
      const double slope = (nx.lower - kn.upper) / (nx.x - kn.x);
      return kn.x + (x - hi) / (1.0 + alpha * slope);
    }
  }
  const auto& last = knots.back();
  if (bounded_right) return last.x;
  const double hi = last.x + alpha * last.upper;
  return last.x + (x - hi) / (1.0 + alpha * right_slope);
}

// ---------------------------------------------------------------- MonotoneOperator

struct MonotoneOperator::Node {
  Kind kind = Kind::kZero;
  std::size_t dim = 0;
  std::optional<ConvexSet> domain;
  std::optional<ConvexFn> fn;
  MonotoneGraph1D graph;
  std::shared_ptr<const Node> base;
  double factor = 1.0;
  Point shift;
};

MonotoneOperator MonotoneOperator::zero(std::size_t dim) {
  if (dim == 0) throw ConfigError("zero operator: dimension must be positive");
  auto n = std::make_shared<Node>();
  n->kind = Kind::kZero;
  n->dim = dim;
  n->domain = ConvexSet::whole_space(dim);
  return MonotoneOperator(std::move(n));
}

MonotoneOperator MonotoneOperator::normal_cone(ConvexSet set) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::kNormalCone;
  n->dim = set.dim();
  n->domain = std::move(set);
  return MonotoneOperator(std::move(n));
}

MonotoneOperator MonotoneOperator::subdifferential(ConvexFn fn) {
  if (!fn.has_prox())
    throw UnsupportedError("subdifferential: function has no usable proximal map in d=" +
                           std::to_string(fn.dim()));
  auto n = std::make_shared<Node>();
  n->kind = Kind::kSubdifferential;
  n->dim = fn.dim();
  n->domain = fn.domain();
  n->fn = std::move(fn);
  return MonotoneOperator(std::move(n));
}

MonotoneOperator MonotoneOperator::graph1d(MonotoneGraph1D graph) {
  const auto& ks = graph.knots;
  if (ks.empty()) throw ConfigError("graph1d: at least one knot is required");
  if (!(graph.left_slope >= 0.0) || !(graph.right_slope >= 0.0) || !std::isfinite(graph.left_slope) ||
      !std::isfinite(graph.right_slope))
    throw ConfigError("graph1d: end slopes must be finite and nonnegative");
  for (std::size_t k = 0; k < ks.size(); ++k) {
    if (!std::isfinite(ks[k].x) || !std::isfinite(ks[k].lower) || !std::isfinite(ks[k].upper))
      throw ConfigError("graph1d: knot values must be finite");
    if (ks[k].lower > ks[k].upper) throw ConfigError("graph1d: knot lower exceeds upper");
    if (k > 0 && !(ks[k].x > ks[k - 1].x)) throw ConfigError("graph1d: knots must increase");
    if (k > 0 && ks[k - 1].upper > ks[k].lower) throw ConfigError("graph1d: graph is not monotone");
  }
  if (graph.bounded_left && graph.bounded_right && ks.size() < 2)
    throw ConfigError("graph1d: a bounded domain needs two knots");
  const double lo = graph.bounded_left ? ks.front().x : -kInf;
  const double hi = graph.bounded_right ? ks.back().x : kInf;
  auto n = std::make_shared<Node>();
  n->kind = Kind::kGraph1D;
  n->dim = 1;
  n->domain = ConvexSet::box(Point{lo}, Point{hi});
  n->graph = std::move(graph);
  return MonotoneOperator(std::move(n));
}

MonotoneOperator MonotoneOperator::scaled(MonotoneOperator base, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw ConfigError("scaled: factor must be positive");
  auto n = std::make_shared<Node>();
  n->kind = Kind::kScaled;
  n->dim = base.dim();
  n->domain = base.domain();
  n->factor = factor;
  n->base = std::move(base.node_);
  return MonotoneOperator(std::move(n));
}

MonotoneOperator MonotoneOperator::translated(MonotoneOperator base, Point shift) {
  require_dim(base.dim(), shift.size(), "translated");
  require_finite(shift, "translated shift");
  auto n = std::make_shared<Node>();
  n->kind = Kind::kTranslated;
  n->dim = base.dim();
  n->domain = base.domain().translated(shift);
  n->shift = std::move(shift);
  n->base = std::move(base.node_);
  return MonotoneOperator(std::move(n));
}

MonotoneOperator::Kind MonotoneOperator::kind() const { return node_->kind; }
std::size_t MonotoneOperator::dim() const { return node_->dim; }
const ConvexSet& MonotoneOperator::domain() const { return *node_->domain; }
const Point& MonotoneOperator::interior_witness() const { return node_->domain->interior_witness(); }

std::string MonotoneOperator::describe() const {
  switch (node_->kind) {
    case Kind::kZero:
      return "zero(d=" + std::to_string(node_->dim) + ")";
    case Kind::kNormalCone:
      return "normal-cone[" + node_->domain->describe() + "]";
    case Kind::kSubdifferential:
      return "subdifferential(d=" + std::to_string(node_->dim) + ")";
    case Kind::kGraph1D:
      return "graph1d(knots=" + std::to_string(node_->graph.knots.size()) + ")";
    case Kind::kScaled:
      return std::to_string(node_->factor) + "*" + MonotoneOperator(node_->base).describe();
    case Kind::kTranslated:
      return "translated[" + MonotoneOperator(node_->base).describe() + "]";
  }
  return "?";
}

std::optional<ConvexSet> MonotoneOperator::as_normal_cone() const {
  switch (node_->kind) {
    case Kind::kZero:
    case Kind::kNormalCone:
      return node_->domain;
    case Kind::kSubdifferential:
      if (node_->fn->kind() == ConvexFn::Kind::kIndicator) return node_->domain;
      return std::nullopt;
    case Kind::kScaled:
    case Kind::kTranslated:
      if (MonotoneOperator(node_->base).as_normal_cone()) return node_->domain;
      return std::nullopt;
    default:
      return std::nullopt;
  }
}

bool MonotoneOperator::is_zero() const {
  switch (node_->kind) {
    case Kind::kZero:
      return true;
    case Kind::kScaled:
    case Kind::kTranslated:
      return MonotoneOperator(node_->base).is_zero();
    default:
      return false;
  }
}

void MonotoneOperator::resolvent(double alpha, std::span<const double> x,
                                 std::span<double> out) const {
  switch (node_->kind) {
    case Kind::kZero:
      if (out.data() != x.data()) std::copy(x.begin(), x.end(), out.begin());
      return;
    case Kind::kNormalCone:
      node_->domain->project(x, out);
      return;
    case Kind::kSubdifferential:
      if (out.data() == x.data()) {
        const Point tmp(x.begin(), x.end());
        node_->fn->prox(alpha, tmp, out);
      } else {
        node_->fn->prox(alpha, x, out);
      }
      return;
    case Kind::kGraph1D:
      out[0] = node_->graph.resolvent(alpha, x[0]);
      return;
    case Kind::kScaled:
      MonotoneOperator(node_->base).resolvent(alpha * node_->factor, x, out);
      return;
    case Kind::kTranslated: {
      const std::size_t d = node_->dim;
      Point tmp(d);
      for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] - node_->shift[i];
      MonotoneOperator(node_->base).resolvent(alpha, tmp, tmp);
      for (std::size_t i = 0; i < d; ++i) out[i] = tmp[i] + node_->shift[i];
      return;
    }
  }
}

bool MonotoneOperator::in_domain(std::span<const double> x, double tol) const {
  switch (node_->kind) {
    case Kind::kGraph1D: {
      const auto [lo, hi] = node_->graph.value_interval(x[0]);
      if (lo <= hi) return true;
      return node_->domain->contains(x, tol);
    }
    default:
      return node_->domain->contains(x, tol);
  }
}

bool MonotoneOperator::graph_contains(std::span<const double> x, std::span<const double> y,
                                      double tol) const {
  switch (node_->kind) {
    case Kind::kZero:
      return norm(y) <= tol;
    case Kind::kNormalCone:
      return node_->domain->normal_cone_contains(x, y, tol);
    case Kind::kSubdifferential:
      return node_->fn->subgradient_contains(x, y, tol);
    case Kind::kGraph1D: {
      const double xs = node_->domain->project(x)[0];
      if (std::abs(xs - x[0]) > tol) return false;
      // Tolerance in x: accept if some point within tol has y in its image.
      auto ok = [&](double p) {
        const auto [lo, hi] = node_->graph.value_interval(p);
        return lo <= hi && y[0] >= lo - tol && y[0] <= hi + tol;
      };
      if (ok(xs)) return true;
      for (const auto& k : node_->graph.knots)
        if (std::abs(k.x - xs) <= tol && ok(k.x)) return true;
      return false;
    }
    case Kind::kScaled: {
      Point ys(y.begin(), y.end());
      for (double& v : ys) v /= node_->factor;
      return MonotoneOperator(node_->base).graph_contains(x, ys, tol / node_->factor);
    }
    case Kind::kTranslated: {
      Point xs(x.begin(), x.end());
      for (std::size_t i = 0; i < xs.size(); ++i) xs[i] -= node_->shift[i];
      return MonotoneOperator(node_->base).graph_contains(xs, y, tol);
    }
  }
  return false;
}

Point MonotoneOperator::minimal_section(std::span<const double> x) const {
  require_dim(node_->dim, x.size(), "minimal_section");
  if (!in_domain(x)) throw DomainError("minimal_section: point outside D(A)");
  switch (node_->kind) {
    case Kind::kZero:
    case Kind::kNormalCone:
      return Point(node_->dim, 0.0);
    case Kind::kSubdifferential:
      return node_->fn->min_norm_subgradient(x);
    case Kind::kGraph1D: {
      const auto [lo, hi] = node_->graph.value_interval(x[0]);
      return Point{std::clamp(0.0, lo, hi)};
    }
    case Kind::kScaled: {
      Point g = MonotoneOperator(node_->base).minimal_section(x);
      for (double& v : g) v *= node_->factor;
      return g;
    }
    case Kind::kTranslated: {
      Point xs(x.begin(), x.end());
      for (std::size_t i = 0; i < xs.size(); ++i) xs[i] -= node_->shift[i];
      return MonotoneOperator(node_->base).minimal_section(xs);
    }
  }
  return {};
}

// ---------------------------------------------------------------- free functions

Point resolvent(const MonotoneOperator& a, double alpha, std::span<const double> x) {
  if (!(alpha > 0.0)) throw ConfigError("resolvent: alpha must be positive");
  require_dim(a.dim(), x.size(), "resolvent");
  Point out(x.size());
  a.resolvent(alpha, x, out);
  return out;
}

Point yosida(const MonotoneOperator& a, double alpha, std::span<const double> x) {
  Point j = resolvent(a, alpha, x);
  for (std::size_t i = 0; i < j.size(); ++i) j[i] = (x[i] - j[i]) / alpha;
  return j;
}

Point minimal_section(const MonotoneOperator& a, std::span<const double> x) {
  return a.minimal_section(x);
}

double moreau_envelope(const ConvexFn& f, double alpha, std::span<const double> x) {
  if (!(alpha > 0.0)) throw ConfigError("moreau_envelope: alpha must be positive");
  require_dim(f.dim(), x.size(), "moreau_envelope");
  const Point p = f.prox(alpha, x);
  // Indicator terms vanish at the prox point, which lies in the domain.
  double fp = 0.0;
  if (f.kind() == ConvexFn::Kind::kSum) {
    for (const auto& t : f.terms())
      if (t.kind() != ConvexFn::Kind::kIndicator) fp += t.value(p);
  } else if (f.kind() != ConvexFn::Kind::kIndicator) {
    fp = f.value(p);
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sq += (p[i] - x[i]) * (p[i] - x[i]);
  return fp + sq / (2.0 * alpha);
}

ResolventConvergenceReport check_resolvent_convergence(
    const std::function<MonotoneOperator(double)>& family, const MonotoneOperator& limit,
    double alpha, const std::vector<Point>& test_points, const std::vector<double>& eps_grid) {
  if (test_points.empty() || eps_grid.empty())
    throw ConfigError("check_resolvent_convergence: empty grid");
  ResolventConvergenceReport report;
  for (double eps : eps_grid) {
    const MonotoneOperator a_eps = family(eps);
    double worst = 0.0;
    for (const auto& x : test_points)
      worst = std::max(worst, distance(resolvent(a_eps, alpha, x), resolvent(limit, alpha, x)));
    if (!report.rows.empty() && worst > report.rows.back().sup_error * (1.0 + 1e-12) + 1e-15)
      report.monotone_decreasing = false;
    report.rows.push_back({eps, worst});
  }
  return report;
}

double local_bound_diagnostic(const std::function<MonotoneOperator(double)>& family,
                              const std::vector<double>& eps_grid, std::span<const double> center,
                              double radius, std::size_t samples_per_axis) {
  const std::size_t d = center.size();
  const std::size_t m = std::max<std::size_t>(2, samples_per_axis);
  std::size_t total = 1;
  for (std::size_t i = 0; i < d; ++i) total *= m;
  double worst = 0.0;
  Point x(d);
  for (double eps : eps_grid) {
    const MonotoneOperator a = family(eps);
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::size_t r = idx;
      for (std::size_t i = 0; i < d; ++i) {
        x[i] = center[i] - radius + 2.0 * radius * static_cast<double>(r % m) / static_cast<double>(m - 1);
        r /= m;
      }
      // Points on (or outside) the boundary of D(A) carry unbounded normal components.
      if (!a.domain().is_whole_space() && !a.domain().contains(x, -1e-12)) return kInf;
      worst = std::max(worst, norm(a.minimal_section(x)));
    }
  }
  return worst;
}

}  // namespace mvsde
