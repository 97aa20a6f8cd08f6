#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace newsim {

inline constexpr const char *tool_version = "0.1.0";

namespace exit_code {
inline constexpr int success = 0;
inline constexpr int usage = 1;
inline constexpr int data = 2;
inline constexpr int numeric = 3;
} // namespace exit_code

/// Entry point of the newsim tool. `args` excludes the program name.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace newsim
