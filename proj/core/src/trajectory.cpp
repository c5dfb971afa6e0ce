#include "mcpeval/trajectory.hpp"

#include <set>

#include "mcpeval/error.hpp"

namespace mcpeval::executor {

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::final: return "final";
    case Termination::max_turns: return "max_turns";
    case Termination::error: return "error";
  }
  return "error";
}

Termination termination_from_string(std::string_view s) {
  if (s == "final") return Termination::final;
  if (s == "max_turns") return Termination::max_turns;
  if (s == "error") return Termination::error;
  throw ParseError("unknown termination '" + std::string(s) + "'");
}

std::vector<protocol::ToolCall> Trajectory::call_sequence() const {
  std::vector<protocol::ToolCall> out;
  out.reserve(calls.size());
  for (const auto& c : calls) out.push_back(c.call);
  return out;
}

void Trajectory::validate() const {
  auto fail = [&](const std::string& what) { throw PreconditionError("trajectory " + task_id + "/" + model_id + ": " + what); };
  if ((terminated == Termination::final) != !final_text.empty()) fail("terminated=final must coincide with a non-empty final text");

  std::vector<const protocol::ToolCall*> issued;
  std::vector<std::string> answered;
  for (const auto& m : messages) {
    if (m.role == gateway::Role::assistant)
      for (const auto& c : m.tool_calls) issued.push_back(&c);
    if (m.role == gateway::Role::tool) answered.push_back(m.tool_result_for);
  }
  if (issued.size() != calls.size()) fail("call records do not match the calls in messages");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < calls.size(); ++i) {
    const auto& rec = calls[i];
    if (!(rec.call == *issued[i])) fail("call " + std::to_string(i) + " is out of order");
    if (rec.result.call_id != rec.call.call_id) fail("call " + rec.call.call_id + " has a mismatched result");
    if (!ids.insert(rec.call.call_id).second) fail("duplicate call id " + rec.call.call_id);
  }
  if (answered.size() != calls.size()) fail("every call needs exactly one tool message");
  for (std::size_t i = 0; i < calls.size(); ++i)
    if (answered[i] != calls[i].call.call_id) fail("tool messages out of order at " + std::to_string(i));
}

void to_json(json& j, const Trajectory& t) {
  json calls = json::array();
  for (const auto& c : t.calls) calls.push_back({{"call", c.call}, {"result", c.result}});
  j = json{{"task_id", t.task_id},
           {"model_id", t.model_id},
           {"started_at", t.started_at},
           {"wall_time_ms", t.wall_time.count()},
           {"prompt_template_hash", t.prompt_template_hash},
           {"terminated", to_string(t.terminated)},
           {"error", t.error},
           {"final_text", t.final_text},
           {"messages", t.messages},
           {"calls", std::move(calls)}};
}

void from_json(const json& j, Trajectory& t) {
  t.task_id = j.at("task_id").get<std::string>();
  t.model_id = j.at("model_id").get<std::string>();
  t.started_at = j.value("started_at", std::string());
  t.wall_time = std::chrono::milliseconds(j.value("wall_time_ms", std::int64_t{0}));
  t.prompt_template_hash = j.value("prompt_template_hash", std::string());
  t.terminated = termination_from_string(j.at("terminated").get<std::string>());
  t.error = j.value("error", std::string());
  t.final_text = j.value("final_text", std::string());
  t.messages = j.at("messages").get<std::vector<gateway::ChatMessage>>();
  t.calls.clear();
  for (const auto& c : j.at("calls")) {
    t.calls.push_back({c.at("call").get<protocol::ToolCall>(), c.at("result").get<protocol::ToolResult>()});
  }
}

json timeless_json(const Trajectory& t) {
  json j = t;
  j.erase("started_at");
  j.erase("wall_time_ms");
  return j;
}

}  // namespace mcpeval::executor
