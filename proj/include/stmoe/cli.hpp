#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stmoe::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kInput = 3,
  kFit = 4,
};

/// Runs one subcommand (fit, predict, cluster, select, simulate, benchmark).
/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stmoe::cli
