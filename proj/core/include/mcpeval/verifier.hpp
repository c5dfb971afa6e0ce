#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcpeval/gateway.hpp"
#include "mcpeval/protocol.hpp"
#include "mcpeval/taskgen.hpp"
#include "mcpeval/trajectory.hpp"

// Execute-check-refine loop turning generated tasks into tasks with a
// ground-truth call sequence.
namespace mcpeval::verifier {

using json = nlohmann::json;
using executor::Trajectory;
using taskgen::TaskSpec;

struct VerifiedTask {
  TaskSpec task;
  std::vector<protocol::ToolCall> ground_truth_calls;
  std::string ground_truth_trajectory;  // path relative to the output root
  std::string verified_by;
  int attempts = 1;

  /// Set by verify_task and by load_verified; not serialized inline.
  std::optional<Trajectory> trajectory;

  /// Cross-field consistency with `trajectory` when it is loaded.
  void validate() const;
};

void to_json(json& j, const VerifiedTask& v);
void from_json(const json& j, VerifiedTask& v);

enum class Clause { none, no_calls, tool_error, no_final };

std::string_view to_string(Clause c);

struct SuccessVerdict {
  bool success = false;
  Clause clause = Clause::none;
  std::string reason;
};

/// Success iff (a) at least one call was issued, (b) no call returned
/// is_error, (c) the loop ended on a final answer. Reports the first
/// violated clause.
SuccessVerdict judge_success(const Trajectory& trajectory);

struct FailedAttempt {
  int revision = 0;
  std::string instruction;
  Clause clause = Clause::none;
  std::string reason;
  std::string trajectory_file;  // relative to the output root
  std::optional<Trajectory> trajectory;
};

struct RejectedTask {
  TaskSpec task;  // last revision tried
  int attempts = 0;
  std::vector<FailedAttempt> failures;
};

void to_json(json& j, const RejectedTask& r);
void from_json(const json& j, RejectedTask& r);

struct VerifyBudget {
  int max_attempts = 3;
};

using VerifyOutcome = std::variant<VerifiedTask, RejectedTask>;

/// Prompt asking the frontier model to rewrite a failed task so every required
/// parameter is derivable from its text.
std::vector<gateway::ChatMessage> build_refinement_prompt(const TaskSpec& task, const Trajectory& failed,
                                                          const SuccessVerdict& verdict,
                                                          const std::vector<protocol::ToolSpec>& tools);

/// Verifies one task over an open session. Unreachable servers and gateway
/// failures propagate as exceptions; task failures become RejectedTask.
VerifyOutcome verify_task(const TaskSpec& task, protocol::Session& session, const std::vector<protocol::ToolSpec>& tools,
                          const gateway::ModelConfig& frontier, const VerifyBudget& budget);

/// Connects to `server` and verifies `task`.
VerifyOutcome verify_task(const TaskSpec& task, const protocol::ServerConfig& server,
                          const gateway::ModelConfig& frontier, const VerifyBudget& budget);

struct VerifyRunOptions {
  std::filesystem::path out_dir;
  VerifyBudget budget;
  std::size_t workers = 4;
  /// Called after each outcome is committed to disk.
  std::function<void()> on_progress;
};

struct VerifyRunSummary {
  std::size_t verified = 0;
  std::size_t rejected = 0;
  std::size_t skipped = 0;  // already on disk
};

/// Verifies `tasks` (routing each by domain to `servers`) and persists
/// verified.jsonl, rejected.jsonl and trajectories/. Resumes by task_id and
/// revision.
VerifyRunSummary verify_tasks(const std::vector<TaskSpec>& tasks,
                              const std::map<std::string, protocol::ServerConfig>& servers,
                              const gateway::ModelConfig& frontier, const VerifyRunOptions& options);

/// Reads <out>/verified.jsonl, loading each ground-truth trajectory.
std::vector<VerifiedTask> load_verified(const std::filesystem::path& out_dir);

/// Relative path of a verification trajectory.
std::string verification_trajectory_file(const std::string& task_id, const std::string& model_id, int revision);

}  // namespace mcpeval::verifier
