#pragma once

#include <string>
#include <vector>

namespace shiftbounds {

/// Runs one CLI invocation (arguments without the program name).
/// Exit codes: 0 success, 1 violated audit verdict, 2 usage error, 3 data
/// error.
int run_cli(const std::vector<std::string>& args);

}  // namespace shiftbounds
