#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace permeq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // a verification or assertion failed
inline constexpr int kExitUsage = 2;    // bad flags or arguments

/// Version of the JSON and CSV layouts written by the tool.
inline constexpr int kSchemaVersion = 1;

/// Runs `permeq <args...>` (args exclude the program name) and returns the
/// exit code. Results go to `out` unless --output names a file; diagnostics
/// and the resolved configuration go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace permeq::cli
