#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mksr {

inline constexpr const char* kVersion = "0.1.0";

/// Runs one command line (args[0] is the program name). Exit codes: 0 success,
/// 1 usage error, 2 data or validation error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mksr
