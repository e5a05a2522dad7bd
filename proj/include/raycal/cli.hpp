#pragma once

#include <string>
#include <vector>

namespace raycal {

// Entry point behind the `raycal` binary. args excludes the program name.
// Exit codes: 0 success, 1 usage error, 2 parse/numerical failure.
int run(const std::vector<std::string>& args);

}  // namespace raycal
