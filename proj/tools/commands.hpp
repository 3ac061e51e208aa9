#pragma once

// The evil command-line tool. run() parses arguments and dispatches to a
// subcommand; it is a library function so tests can drive it in-process.

#include <ostream>
#include <string>
#include <vector>

namespace evil::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;

// Relative input paths resolve against this directory when it is set.
inline constexpr const char* kDataRootEnv = "EVIL_DATA_ROOT";

/// args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace evil::cli
