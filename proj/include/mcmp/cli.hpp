#pragma once

#include <iosfwd>

namespace mcmp {

// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitScenario = 3;
inline constexpr int kExitInfeasible = 4;

// Runs the command line `argv` and returns its exit code. Output that would
// go to a file with --out is written there instead of `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mcmp
