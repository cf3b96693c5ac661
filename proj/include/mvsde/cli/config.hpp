#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvsde/asymptotics.hpp"
#include "mvsde/coeffs.hpp"
#include "mvsde/sde.hpp"
#include "mvsde/variational.hpp"

namespace mvsde::cli {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct SimulateBlock {
  std::size_t particles = 1000;
  std::size_t record_every = 1;
  std::string format = "csv";  // csv | binary | both
};

struct SkeletonBlock {
  /// Stacked control values (steps x d); empty means h = 0.
  std::vector<double> control;
  bool mdp = false;
};

struct RateBlock {
  RateTarget target;
  RateSettings settings;
};

struct LdpBlock {
  RareEvent event;
  std::vector<double> eps;
  std::size_t paths = 100000;
  /// Reference rate: a number, or computed by minimize_rate when absent.
  std::optional<double> reference_rate;
};

struct MdpBlock {
  std::vector<double> eps;
  double lambda_exponent = 0.25;
  std::size_t paths = 10000;
  MdpSettings settings;
};

struct LilBlock {
  LilSpec spec;
  Point center;
  LilHarnessSettings settings;
};

struct DiagBlock {
  std::vector<Hypothesis> hypotheses = {Hypothesis::kH1, Hypothesis::kH2};
  HypothesisSettings settings;
  std::size_t samples = 200;
  double radius = 2.0;
  std::size_t cloud_size = 8;
  std::size_t particles = 200;
  std::size_t graph_samples = 64;
};

/// A fully validated experiment. `canonical` holds every field with defaults made
/// explicit; its hash identifies the experiment.
struct ExperimentConfig {
  json canonical;
  std::uint64_t hash = 0;

  SdeProblem problem;
  SchemeSpec scheme;
  RngSpec rng;
  std::string output_dir;

  std::optional<SimulateBlock> simulate;
  std::optional<SkeletonBlock> skeleton;
  std::optional<RateBlock> rate;
  std::optional<LdpBlock> ldp;
  std::optional<MdpBlock> mdp;
  std::optional<LilBlock> lil;
  std::optional<DiagBlock> diag;
};

/// Validates everything; throws ConfigError naming the offending field. Unknown
/// fields are errors. The output directory does not enter the hash.
ExperimentConfig parse_config(const json& raw);

/// Applies "a.b.c=value" (value parsed as JSON when possible, else as a string).
void apply_override(json& raw, const std::string& assignment);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::uint64_t h);

}  // namespace mvsde::cli
