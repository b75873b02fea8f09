#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nkgad {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumeric = 2;

/// Runs one subcommand. `args` excludes the program name. Data goes to
/// `out` when no `--out` is given; diagnostics always go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nkgad
