#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ktraj::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitInternal = 1;

/// Runs the `ktraj` command line. args[0] is the program name.
/// Reports go to `out`, diagnostics to `err`; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ktraj::cli
