#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace trico {

/// args excludes the program name: {subcommand, options...}. Returns 0 on
/// success, 1 on a failed check or runtime error, 2 on a usage/config error.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, const char* const* argv);

}  // namespace trico
