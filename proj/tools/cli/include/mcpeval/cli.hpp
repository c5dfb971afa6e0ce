#pragma once

#include <iosfwd>

namespace mcpeval::cli {

/// Exit codes: 0 success, 1 stage failure, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitStageFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `mcpeval` command.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mcpeval::cli
