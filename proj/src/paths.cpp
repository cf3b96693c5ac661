#include "mvsde/paths.hpp"

#include <algorithm>
#include <cmath>

#include "mvsde/errors.hpp"

namespace mvsde {

ControlGrid::ControlGrid(double horizon, std::size_t steps, std::size_t dim, std::vector<double> values)
    : horizon_(horizon), steps_(steps), dim_(dim), values_(std::move(values)) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("control horizon must be positive");
  if (steps == 0 || dim == 0) throw ConfigError("control grid needs steps >= 1 and dim >= 1");
  if (values_.size() != steps * dim) throw ConfigError("control values must have steps * dim entries");
}

ControlGrid ControlGrid::zero(double horizon, std::size_t steps, std::size_t dim) {
  return ControlGrid(horizon, steps, dim, std::vector<double>(steps * dim, 0.0));
}

ControlGrid ControlGrid::constant(double horizon, std::size_t steps, std::span<const double> value) {
  std::vector<double> v;
  v.reserve(steps * value.size());
  for (std::size_t k = 0; k < steps; ++k) v.insert(v.end(), value.begin(), value.end());
  return ControlGrid(horizon, steps, value.size(), std::move(v));
}

ControlGrid ControlGrid::from_function(double horizon, std::size_t steps, std::size_t dim,
                                       const std::function<Point(double)>& f) {
  ControlGrid g = zero(horizon, steps, dim);
  const double dt = g.dt();
  for (std::size_t k = 0; k < steps; ++k) {
    Point p = f(dt * static_cast<double>(k));
    if (p.size() != dim) throw ConfigError("control function returned wrong dimension");
    std::copy(p.begin(), p.end(), g.value(k).begin());
  }
  return g;
}

bool ControlGrid::is_zero() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

double energy(const ControlGrid& h) {
  double s = 0.0;
  for (double v : h.data()) s += v * v;
  return 0.5 * s * h.dt();
}

double Trajectory::sup_distance(const Trajectory& other) const {
  if (other.dim != dim || other.points() != points())
    throw ConfigError("trajectories live on different grids");
  double worst = 0.0;
  for (std::size_t n = 0; n < points(); ++n) worst = std::max(worst, distance(state(n), other.state(n)));
  return worst;
}

}  // namespace mvsde
