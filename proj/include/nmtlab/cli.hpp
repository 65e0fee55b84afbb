#pragma once

// Single-binary command surface. Exit codes: 0 success, 1 data/config/
// contract errors, 2 usage errors.

#include <string>
#include <vector>

namespace nmtlab {

int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args); // args[0] is the program name

} // namespace nmtlab
