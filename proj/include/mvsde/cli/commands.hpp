#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mvsde/cli/config.hpp"

namespace mvsde::cli {

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"simulate", "skeleton", "rate", "ldp-sweep",
                                                 "mdp-sweep", "lil", "diag"};
  return names;
}

struct RunContext {
  std::string output_dir;
  std::size_t threads = 1;
};

/// Output directory for a run: explicit directory, else the config's, else
/// $MVSDE_OUT_ROOT (default "mvsde-runs") / <command>-<hash>.
std::string resolve_output_dir(const std::string& command, const ExperimentConfig& cfg, const std::string& flag);

/// Runs one command and writes its artifacts; returns the list of files written.
/// Throws ConfigError for invalid input and other exceptions for runtime failures.
std::vector<std::string> run_command(const std::string& command, const ExperimentConfig& cfg, const RunContext& ctx,
                                     std::ostream& log);

/// Full command-line entry point: `mvsde <command> --config <path> [--set k=v]...
/// [--out <dir>] [--seed <u64>] [--threads <n>]`. Returns 0 on success, 1 on
/// validation errors and 2 on runtime aborts.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// JSON number, or "inf" / "-inf" / "nan" for non-finite values.
json number(double v);

}  // namespace mvsde::cli
