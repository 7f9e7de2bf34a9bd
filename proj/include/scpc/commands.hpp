#pragma once

#include <iosfwd>

namespace scpc {

// Exit codes of the command line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;  // failure while running a valid command
inline constexpr int kExitUsage = 2;    // bad config, arguments or input files

// Runs the tool with the given arguments. Results go to `out`; the single
// error line (if any) goes to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace scpc
