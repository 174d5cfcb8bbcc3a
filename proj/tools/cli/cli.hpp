#pragma once

#include <ostream>

namespace cseg::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kBadFlags = 2,
  kInputError = 3,
  kSolverFailure = 4,
};

/// Entry point of the `cseg` tool. Normal output goes to `out`, diagnostics
/// and usage text to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cseg::cli
