#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcpeval/gateway.hpp"
#include "mcpeval/protocol.hpp"

// Initial task generation: tool specs -> generation prompt -> Task-LLM ->
// parsed task blocks.
namespace mcpeval::taskgen {

using json = nlohmann::json;

struct TaskSpec {
  std::string task_id;
  std::string domain;  // server id
  std::string instruction;
  std::optional<std::vector<std::string>> expected_tools_hint;
  std::string created_by;
  int revision = 0;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

void to_json(json& j, const TaskSpec& t);
void from_json(const json& j, TaskSpec& t);

struct GenerationRequest {
  protocol::ServerConfig server;
  int count = 1;
  std::optional<std::string> seed_style;
  gateway::ModelConfig task_model;
};

/// First 16 hex chars of SHA-256 over (domain, instruction).
std::string task_id_for(std::string_view domain, std::string_view instruction);

/// Chat prompt asking for `count` tasks over `tools`. Throws
/// PreconditionError for an empty tool list.
std::vector<gateway::ChatMessage> build_generation_prompt(const std::vector<protocol::ToolSpec>& tools, int count,
                                                          const std::optional<std::string>& seed_style = std::nullopt);

struct ParseOutcome {
  std::vector<TaskSpec> tasks;
  std::size_t malformed_blocks = 0;
};

/// Extracts fenced ```json task blocks. Identical instructions get "-k"
/// ordinal suffixes after the first.
ParseOutcome parse_task_blocks_detailed(std::string_view raw, const std::string& domain = "");

std::vector<TaskSpec> parse_task_blocks(std::string_view raw, const std::string& domain = "");

/// Inverse of parse_task_blocks on instruction text and tool hints.
std::string render_task_blocks(const std::vector<TaskSpec>& tasks);

/// Prompts the task model with the given tool specs and parses the reply.
/// Malformed blocks are skipped with a warning; zero tasks is an error.
std::vector<TaskSpec> generate_tasks(const GenerationRequest& request, const std::vector<protocol::ToolSpec>& tools);

/// Connects to request.server, lists its tools, then generates.
std::vector<TaskSpec> generate_tasks(const GenerationRequest& request);

}  // namespace mcpeval::taskgen
