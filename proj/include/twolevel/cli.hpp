#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace twolevel {

/// Exit codes of the command line tool.
enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitResolution = 2, kExitStudyFailed = 3 };

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputEnv = "TWOLEVEL_OUT";

/// Parses and runs one invocation. args excludes the program name. Results
/// go to files under the output directory; summaries go to `out`, notices and
/// errors to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace twolevel
