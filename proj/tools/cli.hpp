#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vocabsel {

/// Runs one command line (without the program name). Errors are reported on
/// `err` as a single `error: <kind>: <message>` line with a nonzero result.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vocabsel
