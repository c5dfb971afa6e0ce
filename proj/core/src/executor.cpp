#include "mcpeval/executor.hpp"

#include <set>

#include "mcpeval/error.hpp"
#include "mcpeval/events.hpp"
#include "mcpeval/hash.hpp"
#include "mcpeval/storage.hpp"
#include "mcpeval/worker_pool.hpp"

namespace mcpeval::executor {
namespace {

constexpr std::string_view kSystemPrompt =
    "You are an assistant connected to a set of tools through the Model Context Protocol.\n"
    "Work on the user's request step by step. Call a tool whenever it can provide information or "
    "take an action you need; use exact parameter names from the tool schemas and take parameter "
    "values from the request. Read each tool result before deciding the next step, and recover "
    "from tool errors when you can.\n"
    "When you have everything you need, stop calling tools and reply to the user with a complete "
    "final answer.";

using Clock = std::chrono::steady_clock;

std::string unique_call_id(std::string id, std::set<std::string>& used) {
  if (id.empty()) id = "call_" + std::to_string(used.size());
  std::string candidate = id;
  for (int k = 1; used.contains(candidate); ++k) candidate = id + "#" + std::to_string(k);
  used.insert(candidate);
  return candidate;
}

void finish_timing(Trajectory& t, Clock::time_point start) {
  t.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
}

}  // namespace

std::string_view system_prompt_template() { return kSystemPrompt; }

const std::string& prompt_template_hash() {
  static const std::string hash = sha256_hex(kSystemPrompt);
  return hash;
}

Trajectory run_agent(const taskgen::TaskSpec& task, protocol::Session& session,
                     const std::vector<protocol::ToolSpec>& tools, const gateway::ModelConfig& model,
                     const RunOptions& options) {
  model.validate();
  auto start = Clock::now();
  Trajectory t;
  t.task_id = task.task_id;
  t.model_id = model.model_id;
  t.started_at = storage::utc_now_iso();
  t.prompt_template_hash = prompt_template_hash();
  t.messages = {gateway::ChatMessage::system(std::string(kSystemPrompt)), gateway::ChatMessage::user(task.instruction)};

  std::set<std::string> known_tools;
  for (const auto& spec : tools) known_tools.insert(spec.name);
  std::set<std::string> used_ids;

  auto fail = [&](const std::string& message) {
    t.terminated = Termination::error;
    t.error = message;
    t.final_text.clear();
    finish_timing(t, start);
    events::emit("execute", "run_failed", {{"task_id", t.task_id}, {"model", t.model_id}, {"error", message}});
  };

  for (int turn = 0; turn < model.max_turns; ++turn) {
    gateway::ModelTurn reply;
    try {
      reply = gateway::complete(model, t.messages, tools);
    } catch (const Error& e) {
      if (options.propagate_failures) throw;
      fail(std::string("gateway failure: ") + e.what());
      return t;
    }

    auto& msg = reply.message;
    if (reply.finish == gateway::Finish::final || msg.tool_calls.empty()) {
      msg.tool_calls.clear();
      t.messages.push_back(msg);
      if (msg.text.empty()) {
        fail("empty final response");
        return t;
      }
      t.final_text = msg.text;
      t.terminated = Termination::final;
      finish_timing(t, start);
      return t;
    }

    for (auto& call : msg.tool_calls) call.call_id = unique_call_id(call.call_id, used_ids);
    t.messages.push_back(msg);

    std::optional<std::string> transport_failure;
    for (const auto& call : msg.tool_calls) {
      protocol::ToolResult result;
      if (transport_failure) {
        result = protocol::text_result(call.call_id, "not executed: " + *transport_failure, true);
      } else if (!known_tools.contains(call.tool_name)) {
        result = protocol::text_result(call.call_id, "unknown tool: " + call.tool_name, true);
      } else {
        try {
          result = session.call_tool(call);
          result.call_id = call.call_id;
        } catch (const ProtocolError& e) {
          if (options.propagate_failures) throw;
          transport_failure = e.what();
          result = protocol::text_result(call.call_id, std::string("transport failure: ") + e.what(), true);
        }
      }
      t.messages.push_back(gateway::ChatMessage::tool(call.call_id, result.text()));
      t.calls.push_back({call, std::move(result)});
    }
    if (transport_failure) {
      fail(*transport_failure);
      return t;
    }
  }

  t.terminated = Termination::max_turns;
  finish_timing(t, start);
  return t;
}

Trajectory run_agent(const taskgen::TaskSpec& task, const protocol::ServerConfig& server,
                     const gateway::ModelConfig& model) {
  try {
    auto session = protocol::Session::connect(server);
    auto tools = session.list_tools();
    auto t = run_agent(task, session, tools, model);
    session.close();
    return t;
  } catch (const ProtocolError& e) {
    Trajectory t;
    t.task_id = task.task_id;
    t.model_id = model.model_id;
    t.started_at = storage::utc_now_iso();
    t.prompt_template_hash = prompt_template_hash();
    t.messages = {gateway::ChatMessage::system(std::string(kSystemPrompt)),
                  gateway::ChatMessage::user(task.instruction)};
    t.terminated = Termination::error;
    t.error = e.what();
    return t;
  }
}

json record_index_line(const EvalRecord& r, const std::string& trajectory_file) {
  return json{{"task_id", r.verified.task.task_id},
              {"revision", r.verified.task.revision},
              {"domain", r.verified.task.domain},
              {"model_id", r.candidate.model_id},
              {"trajectory", trajectory_file},
              {"terminated", to_string(r.candidate.terminated)},
              {"calls", r.candidate.calls.size()}};
}

std::string candidate_trajectory_file(const std::string& task_id, const std::string& model_id) {
  return "trajectories/" + storage::safe_name(task_id) + "." + storage::safe_name(model_id) + ".json";
}

std::string records_file(const std::string& model_id) { return "records." + storage::safe_name(model_id) + ".jsonl"; }

std::vector<EvalRecord> evaluate_model(const std::vector<verifier::VerifiedTask>& tasks,
                                       const std::map<std::string, protocol::ServerConfig>& servers,
                                       const gateway::ModelConfig& model, const EvalOptions& options) {
  if (tasks.empty()) throw PreconditionError("evaluate_model: task list is empty");
  model.validate();
  for (const auto& v : tasks) {
    if (!servers.contains(v.task.domain))
      throw PreconditionError("evaluate_model: no server configured for domain '" + v.task.domain + "'");
  }
  const auto& out = options.out_dir;
  const auto index_path = out / records_file(model.model_id);

  // Resume: pairs already indexed with a readable trajectory are reused.
  std::map<std::string, json> done;
  for (auto& line : storage::read_jsonl(index_path)) {
    auto traj = line.value("trajectory", std::string());
    if (line.value("model_id", std::string()) == model.model_id && std::filesystem::exists(out / traj)) {
      auto id = line.at("task_id").get<std::string>();
      done[id] = std::move(line);
    }
  }

  std::vector<EvalRecord> records(tasks.size());
  std::vector<json> lines(tasks.size());
  std::size_t executed = 0;

  ordered_parallel_for<EvalRecord>(
      tasks.size(), options.workers,
      [&](std::size_t i) {
        const auto& v = tasks[i];
        EvalRecord rec{v, {}, std::nullopt, std::nullopt};
        if (auto it = done.find(v.task.task_id); it != done.end()) {
          rec.candidate = storage::read_json(out / it->second.at("trajectory").get<std::string>()).get<Trajectory>();
          return rec;
        }
        rec.candidate = run_agent(v.task, servers.at(v.task.domain), model);
        auto file = candidate_trajectory_file(v.task.task_id, model.model_id);
        storage::write_json(out / file, rec.candidate);
        return rec;
      },
      [&](std::size_t i, EvalRecord& rec) {
        auto file = candidate_trajectory_file(rec.verified.task.task_id, model.model_id);
        lines[i] = record_index_line(rec, file);
        if (!done.contains(rec.verified.task.task_id)) {
          storage::append_jsonl(index_path, lines[i]);
          ++executed;
          events::emit("evaluate", "task_done",
                       {{"task_id", rec.verified.task.task_id},
                        {"model", model.model_id},
                        {"outcome", to_string(rec.candidate.terminated)}});
        }
        records[i] = std::move(rec);
        if (options.on_progress) options.on_progress();
      });

  // Rewrite in task order so resumed and fresh runs produce the same index.
  storage::write_jsonl(index_path, lines);
  events::emit("evaluate", "model_done",
               {{"model", model.model_id}, {"executed", executed}, {"reused", tasks.size() - executed}});
  return records;
}

std::vector<EvalRecord> evaluate_model(const std::vector<verifier::VerifiedTask>& tasks,
                                       const protocol::ServerConfig& server, const gateway::ModelConfig& model,
                                       const EvalOptions& options) {
  std::map<std::string, protocol::ServerConfig> servers;
  auto routed = tasks;
  for (auto& v : routed) {
    v.task.domain = server.id;
  }
  servers.emplace(server.id, server);
  auto records = evaluate_model(routed, servers, model, options);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].verified = tasks[i];
  return records;
}

std::vector<EvalRecord> load_records(const std::filesystem::path& out_dir, const std::string& model_id,
                                     const std::vector<verifier::VerifiedTask>& verified) {
  std::map<std::string, const verifier::VerifiedTask*> by_id;
  for (const auto& v : verified) by_id[v.task.task_id] = &v;
  std::vector<EvalRecord> out;
  for (const auto& line : storage::read_jsonl(out_dir / records_file(model_id))) {
    auto id = line.at("task_id").get<std::string>();
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ParseError("record for unknown task " + id);
    EvalRecord rec{*it->second, {}, std::nullopt, std::nullopt};
    rec.candidate = storage::read_json(out_dir / line.at("trajectory").get<std::string>()).get<Trajectory>();
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace mcpeval::executor
