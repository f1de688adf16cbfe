#pragma once

#include <string>
#include <vector>

namespace mmm {

// Command-line entry point. `args` excludes the program name. Exit codes:
// 0 success, 1 usage error, 2 runtime failure.
int cli_main(const std::vector<std::string>& args);

}  // namespace mmm
