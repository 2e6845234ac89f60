#pragma once

#include <string>
#include <vector>

namespace mmdci {

/// Entry point behind main(). Exit codes: 0 success, 1 runtime failure,
/// 2 input error, 64 usage error.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace mmdci
