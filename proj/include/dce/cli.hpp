#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dce {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitVerify = 3 };

/// Runs `dce <subcommand> ...`; args excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dce
