#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace strc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Parses `args` (without the program name), runs one subcommand and
/// returns the exit code: 0 success, 1 runtime failure, 2 usage or
/// configuration error. Logs go to `log`, help text to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& log);

}  // namespace strc
