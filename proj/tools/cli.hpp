#pragma once

#include <ostream>
#include <span>
#include <string>

namespace qainit::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kIo = 3,
    kNumeric = 4,
};

/// Runs one invocation. `args` excludes the program name. Data goes to `out`,
/// diagnostics to `err`.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

} // namespace qainit::cli
