#pragma once

// Command-line front end: gen | train | adapt | eval | experiment | sweep.
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

#include <iosfwd>
#include <string>
#include <vector>

namespace mtda {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "MTDA_OUTPUT_DIR";
inline constexpr const char* kDefaultOutputDir = "mtda_out";

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mtda
