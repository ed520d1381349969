#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace neurodecode::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// Runs one command line (args exclude the program name). Normal output goes
// to `out`, diagnostics and progress to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace neurodecode::cli
