#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace swarmdiff::harness {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitPlanning = 2;
inline constexpr int kExitIo = 3;

/// Runs `swarmdiff <args...>` (args excludes the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace swarmdiff::harness
