#pragma once

#include <string>
#include <vector>

namespace protoot {

// Entry point behind the protoot binary. args excludes the program name.
// Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 numerical
// failure. Diagnostics go to stderr; data goes to files or stdout.
int run_cli(const std::vector<std::string>& args);

}  // namespace protoot
