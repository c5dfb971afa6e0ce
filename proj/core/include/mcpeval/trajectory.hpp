#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcpeval/gateway.hpp"
#include "mcpeval/protocol.hpp"

namespace mcpeval::executor {

using json = nlohmann::json;

enum class Termination { final, max_turns, error };

std::string_view to_string(Termination t);
Termination termination_from_string(std::string_view s);

struct CallRecord {
  protocol::ToolCall call;
  protocol::ToolResult result;

  friend bool operator==(const CallRecord&, const CallRecord&) = default;
};

/// Full record of one agent run.
struct Trajectory {
  std::string task_id;
  std::string model_id;
  std::vector<gateway::ChatMessage> messages;
  std::vector<CallRecord> calls;
  std::string final_text;
  Termination terminated = Termination::error;
  std::string error;  // set when terminated == error
  std::chrono::milliseconds wall_time{0};
  std::string started_at;  // ISO-8601 UTC
  std::string prompt_template_hash;

  /// Issued calls in execution order.
  std::vector<protocol::ToolCall> call_sequence() const;

  /// Throws PreconditionError when the pairing/ordering/termination
  /// invariants are violated.
  void validate() const;
};

void to_json(json& j, const Trajectory& t);
void from_json(const json& j, Trajectory& t);

/// JSON form without started_at/wall_time, for replay comparisons.
json timeless_json(const Trajectory& t);

}  // namespace mcpeval::executor
