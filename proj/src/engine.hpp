#pragma once

// Shared Euler step engine behind the particle simulators and the deterministic
// skeleton solvers. Keeping a single implementation is what makes the zero-noise,
// single-particle runs agree bit for bit with the ODE solvers.

#include <optional>
#include <span>
#include <vector>

#include "mvsde/sde.hpp"

namespace mvsde::detail {

enum class LawSource {
  kSelf,     // same-step empirical measure of the ensemble
  kFrozen,   // caller-supplied view per step
  kShifted,  // MDP: law of lambda M + X0, drift centred at b(X0, delta_X0)
};

struct EngineSpec {
  std::size_t dim = 0;
  std::size_t particles = 0;
  std::size_t steps = 0;
  double dt = 0.0;
  SchemeMethod method = SchemeMethod::kProjection;
  double alpha = 0.0;
  MonotoneOperator op = MonotoneOperator::zero(1);
  MeanFieldCoefficients coeffs;
  /// Multiplies sigma sqrt(dt) Z; zero skips noise generation entirely.
  double noise_scale = 0.0;
  const ControlGrid* control = nullptr;

  LawSource law = LawSource::kSelf;
  std::span<const MeasureView> frozen;

  double lambda = 1.0;
  const Trajectory* limit = nullptr;
  const Drift* limit_drift = nullptr;

  std::vector<double> initial;
  RngSpec rng;
};

/// `control`, when given, replaces spec.control.
PathEnsemble run_engine(const EngineSpec& spec, const SimulationOptions& options,
                        const ControlGrid* control = nullptr);

/// Grid indices recorded for a given record_every.
std::vector<std::size_t> record_grid(std::size_t steps, std::size_t record_every);

}  // namespace mvsde::detail
