// dykaf/cli.hpp
//
// Command-line front end: argv parsing, config assembly (defaults <-
// config file <- inline overrides), dispatch to the experiment runners,
// and the selftest report.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dykaf/errors.hpp"

namespace dykaf {

/// Usage errors (unknown subcommand/flag, malformed arguments); mapped to
/// exit code 2.
class CliUsageError : public Error {
 public:
  using Error::Error;
};

struct CliInvocation {
  std::string subcommand;
  std::string config_path;
  /// Inline overrides in command-line order ("--seed 7" and "seed=7" both
  /// land here); keys are validated against the config registry when
  /// applied.
  std::vector<std::pair<std::string, std::string>> overrides;
  bool help = false;
};

/// Parses argv. Throws CliUsageError on unknown subcommands or malformed
/// tokens; key/value validation happens at dispatch so the error message
/// can name the offending key.
CliInvocation parse_args(const std::vector<std::string>& args);

/// Runs the invocation. Exit codes: 0 success, 1 runtime or validator
/// failure, 2 usage/config error.
int dispatch(const CliInvocation& invocation);

/// Convenience wrapper for main(): parse + dispatch with all errors
/// mapped to exit codes and messages on stderr.
int run_cli(int argc, const char* const* argv);

/// Self-check of the core oracle identities (rearrangement, Kronecker-vec,
/// QR, eigensolver, projector splitting, initialization optimality).
/// Deterministic; returns the printable report and overall pass.
struct SelftestResult {
  std::string report;
  int passed = 0;
  int total = 0;
  bool pass = false;
};
SelftestResult selftest(long seed);

std::string usage_text();

}  // namespace dykaf
