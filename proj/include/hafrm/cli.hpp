#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hafrm {

// Runs one command line (args excludes the program name). Returns the process
// exit code: 0 success, 2 configuration or validation error, 3 numeric
// failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hafrm
