#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace decdec {

inline constexpr const char* kVersion = "0.1.0";

// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitFormat = 3;
inline constexpr int kExitPrecondition = 4;
inline constexpr int kExitInvariant = 5;

// Parses argv (argv[0] is the program name), runs one subcommand and returns
// the exit status. Human-readable results go to out, diagnostics to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);
// Same, with args excluding the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace decdec
