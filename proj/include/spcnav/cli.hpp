#pragma once

#include <string>
#include <vector>

namespace spcnav::cli {

inline constexpr const char* kVersion = "0.1.0";

// Entry point behind the binary: returns the process exit code.
// 0 = success, 1 = validation/runtime failure, 2 = usage error.
int dispatch(const std::vector<std::string>& args);

}  // namespace spcnav::cli
