#pragma once

#include <string>
#include <vector>

namespace gridtherm::cli {

/// Full command dispatch: parses argv, runs one subcommand, writes its output
/// files, and maps failures to exit codes (0 success, 1 validation error,
/// 2 infeasibility). Diagnostics go to stderr.
int run(int argc, const char* const* argv);

/// Same, from bare arguments (no program name); used by the tests.
int run(const std::vector<std::string>& arguments);

} // namespace gridtherm::cli
