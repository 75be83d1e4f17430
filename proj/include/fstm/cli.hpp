#pragma once

#include <string>
#include <vector>

namespace fstm::cli {

// Exit codes shared by every subcommand.
inline constexpr int exit_ok = 0;
inline constexpr int exit_validation = 1;
inline constexpr int exit_runtime = 2;
inline constexpr int exit_no_convergence = 3;

/// Runs the command line; args excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace fstm::cli
