#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace charme::cli {

/// Exit codes of the charme tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;  // invalid input, usage errors
inline constexpr int kExitNumerical = 2;   // non-finite loss, singular blocks, too many failures

/// Runs one subcommand. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Current config document version accepted by --config.
inline constexpr int kConfigSchemaVersion = 1;

}  // namespace charme::cli
