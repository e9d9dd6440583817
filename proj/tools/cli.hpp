#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace refu::cli {

/// Exit codes of the `refu` tool.
enum ExitCode : int {
  kOk = 0,
  kInputError = 1,      // bad flags, config, files, shapes or protocol
  kNumericalError = 2,  // non-PD factorization, divergence, failed check
};

/// Runs `refu <verb> [flags]`. `args` excludes the program name. Results go to
/// `out`; diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace refu::cli
