#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace imn {

/// Exit codes of the `imn` tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitModelMismatch = 3;

/// Runs `imn <subcommand> [flags]`; `args` excludes the program name.
/// Subcommands: synth, train, eval, attribute, ablate, serve.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace imn
