#pragma once

#include <string>
#include <vector>

namespace cweibull::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kIoError = 3,
  kNumericError = 4,
};

// Entry point shared by the executable and the tests. Diagnostics go to
// standard error; log verbosity comes from CWEIBULL_LOG
// (off, error, warn, info, debug; default warn).
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace cweibull::cli
