#pragma once

// Command dispatch for the `gdkd` executable. Kept apart from main() so the
// tests can drive every subcommand in-process.
//
// Exit codes: 0 success, 1 verification or training failure, 2 usage or
// configuration error.

#include <iosfwd>
#include <string>
#include <vector>

namespace gdkd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gdkd::cli
