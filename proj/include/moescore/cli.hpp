#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace moescore {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `moescore` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// "1;2;3;4;1,2,3;1,2,3,4" -> {{1},{2},{3},{4},{1,2,3},{1,2,3,4}}
std::vector<std::vector<int>> parse_subsets(const std::string& text);
// "Expert 2", "MoE (3 Experts)" for {1..k}, otherwise "MoE (Experts 1+4)".
std::string subset_label(const std::vector<int>& ids);

}  // namespace moescore
