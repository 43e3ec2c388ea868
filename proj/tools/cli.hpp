#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bridge::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kEstimationError = 3, kInternalError = 4 };

// Runs the command line with argv-style arguments (args[0] is the program
// name). Diagnostics go to err, short status lines to out.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bridge::cli
