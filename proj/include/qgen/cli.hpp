#pragma once

#include <string>
#include <vector>

namespace qgen::cli {

// Entry point behind the qgen binary. Returns 0 on success, 1 on
// validation/configuration errors, 2 on runtime failures.
int run(const std::vector<std::string> &args);

} // namespace qgen::cli
