#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcpeval/gateway.hpp"
#include "mcpeval/judge.hpp"
#include "mcpeval/matcher.hpp"
#include "mcpeval/protocol.hpp"
#include "mcpeval/taskgen.hpp"
#include "mcpeval/trajectory.hpp"
#include "mcpeval/verifier.hpp"

// The agent loop: a model acts as the MCP client over one task, alternating
// model turns and tool calls until it answers or runs out of turns.
namespace mcpeval::executor {

/// Fixed system prompt shown to every agent.
std::string_view system_prompt_template();
inline constexpr int kPromptTemplateVersion = 1;
/// SHA-256 of the template, recorded in every trajectory.
const std::string& prompt_template_hash();

struct RunOptions {
  /// Rethrow transport/gateway failures instead of ending with
  /// terminated=error (the verifier distinguishes them from task failures).
  bool propagate_failures = false;
};

/// Runs `task` over an already connected session offering `tools`.
Trajectory run_agent(const taskgen::TaskSpec& task, protocol::Session& session,
                     const std::vector<protocol::ToolSpec>& tools, const gateway::ModelConfig& model,
                     const RunOptions& options = {});

/// Connects to `server`, lists its tools and runs `task`. A connection
/// failure yields a terminated=error trajectory.
Trajectory run_agent(const taskgen::TaskSpec& task, const protocol::ServerConfig& server,
                     const gateway::ModelConfig& model);

struct EvalRecord {
  verifier::VerifiedTask verified;
  Trajectory candidate;
  std::optional<matcher::TaskMatchReport> match;
  std::optional<judge::JudgeVerdict> judge;
};

/// Index line stored in records.<model>.jsonl (no timestamps).
json record_index_line(const EvalRecord& r, const std::string& trajectory_file);

struct EvalOptions {
  std::filesystem::path out_dir;
  std::size_t workers = 4;
  /// Called after each record is committed to disk.
  std::function<void()> on_progress;
};

/// Relative path of a candidate trajectory file.
std::string candidate_trajectory_file(const std::string& task_id, const std::string& model_id);
/// Relative path of a model's record index.
std::string records_file(const std::string& model_id);

/// One record per task, in task order. Tasks are routed to servers by domain.
/// Records and trajectories are persisted as they complete; (task_id, model)
/// pairs already on disk are loaded instead of re-run.
std::vector<EvalRecord> evaluate_model(const std::vector<verifier::VerifiedTask>& tasks,
                                       const std::map<std::string, protocol::ServerConfig>& servers,
                                       const gateway::ModelConfig& model, const EvalOptions& options);

/// Single-server form: every task runs against `server`.
std::vector<EvalRecord> evaluate_model(const std::vector<verifier::VerifiedTask>& tasks,
                                       const protocol::ServerConfig& server, const gateway::ModelConfig& model,
                                       const EvalOptions& options);

/// Loads the records of `model_id` from `out_dir`, joined with verified tasks.
std::vector<EvalRecord> load_records(const std::filesystem::path& out_dir, const std::string& model_id,
                                     const std::vector<verifier::VerifiedTask>& verified);

}  // namespace mcpeval::executor
