#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gpal::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kValidation = 1,
  kNumerical = 2,
  kIo = 3,
};

/// Entry point behind the `gpal` binary. `args` excludes the program name.
/// Data goes to `out`, diagnostics and usage text to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gpal::cli
