#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace depl::cli {

// Exit codes, one per error category.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kIo = 4,
  kFormat = 5,
  kNumeric = 6,
};

// Runs one command line (args excludes the program name). Human-readable
// output goes to `out`, progress and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace depl::cli
