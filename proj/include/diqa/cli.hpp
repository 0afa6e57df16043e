#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace diqa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one command line (without the program name). Exit codes: 0 success,
/// 1 usage/validation/configuration errors, 2 runtime failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace diqa::cli
