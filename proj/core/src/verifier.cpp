#include "mcpeval/verifier.hpp"

#include <set>
#include <sstream>

#include "mcpeval/error.hpp"
#include "mcpeval/events.hpp"
#include "mcpeval/executor.hpp"
#include "mcpeval/storage.hpp"
#include "mcpeval/worker_pool.hpp"

namespace mcpeval::verifier {

void VerifiedTask::validate() const {
  if (attempts < 1) throw PreconditionError("verified task " + task.task_id + ": attempts must be positive");
  if (ground_truth_calls.empty()) throw PreconditionError("verified task " + task.task_id + ": no ground-truth calls");
  if (trajectory && trajectory->call_sequence() != ground_truth_calls)
    throw PreconditionError("verified task " + task.task_id + ": ground truth differs from its trajectory");
}

void to_json(json& j, const VerifiedTask& v) {
  j = json{{"task", v.task},
           {"ground_truth_calls", v.ground_truth_calls},
           {"ground_truth_trajectory", v.ground_truth_trajectory},
           {"verified_by", v.verified_by},
           {"attempts", v.attempts}};
}

void from_json(const json& j, VerifiedTask& v) {
  v.task = j.at("task").get<TaskSpec>();
  v.ground_truth_calls = j.at("ground_truth_calls").get<std::vector<protocol::ToolCall>>();
  v.ground_truth_trajectory = j.value("ground_truth_trajectory", std::string());
  v.verified_by = j.value("verified_by", std::string());
  v.attempts = j.value("attempts", 1);
  v.trajectory.reset();
}

std::string_view to_string(Clause c) {
  switch (c) {
    case Clause::none: return "none";
    case Clause::no_calls: return "a";
    case Clause::tool_error: return "b";
    case Clause::no_final: return "c";
  }
  return "none";
}

namespace {

Clause clause_from_string(std::string_view s) {
  if (s == "a") return Clause::no_calls;
  if (s == "b") return Clause::tool_error;
  if (s == "c") return Clause::no_final;
  return Clause::none;
}

}  // namespace

void to_json(json& j, const RejectedTask& r) {
  json failures = json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"revision", f.revision},
                        {"instruction", f.instruction},
                        {"clause", to_string(f.clause)},
                        {"reason", f.reason},
                        {"trajectory", f.trajectory_file}});
  }
  j = json{{"task", r.task}, {"attempts", r.attempts}, {"failures", std::move(failures)}};
}

void from_json(const json& j, RejectedTask& r) {
  r.task = j.at("task").get<TaskSpec>();
  r.attempts = j.at("attempts").get<int>();
  r.failures.clear();
  for (const auto& f : j.at("failures")) {
    FailedAttempt a;
    a.revision = f.value("revision", 0);
    a.instruction = f.value("instruction", std::string());
    a.clause = clause_from_string(f.value("clause", std::string()));
    a.reason = f.value("reason", std::string());
    a.trajectory_file = f.value("trajectory", std::string());
    r.failures.push_back(std::move(a));
  }
}

SuccessVerdict judge_success(const Trajectory& t) {
  if (t.calls.empty()) return {false, Clause::no_calls, "no tool call was issued"};
  for (const auto& c : t.calls) {
    if (c.result.is_error) {
      return {false, Clause::tool_error, "call " + c.call.call_id + " (" + c.call.tool_name + ") failed: " + c.result.text()};
    }
  }
  if (t.terminated != executor::Termination::final) {
    std::string why = t.terminated == executor::Termination::max_turns ? "turn budget exhausted without a final answer"
                                                                       : "run ended with an error: " + t.error;
    return {false, Clause::no_final, why};
  }
  return {true, Clause::none, ""};
}

namespace {

std::string transcript(const Trajectory& t) {
  std::ostringstream out;
  std::size_t k = 0;
  for (const auto& rec : t.calls) {
    ++k;
    out << k << ". " << rec.call.tool_name << " " << rec.call.arguments.dump() << "\n   -> "
        << (rec.result.is_error ? "[error] " : "") << rec.result.text() << "\n";
  }
  if (t.calls.empty()) out << "(no tool calls)\n";
  out << "Final answer: " << (t.final_text.empty() ? "(none)" : t.final_text) << "\n";
  out << "Ended by: " << executor::to_string(t.terminated) << "\n";
  return out.str();
}

}  // namespace

std::vector<gateway::ChatMessage> build_refinement_prompt(const TaskSpec& task, const Trajectory& failed,
                                                          const SuccessVerdict& verdict,
                                                          const std::vector<protocol::ToolSpec>& tools) {
  std::ostringstream sys;
  sys << "You maintain a set of evaluation tasks for tool-using assistants. When an assistant fails a task "
         "because the task text is missing information, you rewrite the task.";
  std::ostringstream user;
  user << "Rewrite the task below so that an assistant can complete it with the tools listed.\n\n"
       << "Original task:\n" << task.instruction << "\n\n"
       << "Failed attempt:\n" << transcript(failed) << "\n"
       << "Failure (clause " << to_string(verdict.clause) << "): " << verdict.reason << "\n\n"
       << "Tools:\n";
  for (const auto& t : tools) {
    user << "### " << t.name << "\n";
    if (!t.description.empty()) user << t.description << "\n";
    user << t.input_schema.dump(2) << "\n";
  }
  user << "\nKeep the user's goal, but state a concrete value for every required parameter so the tool calls "
          "can be derived from the task text alone. Reply with a single fenced JSON block:\n"
       << "```json\n{\"instruction\": \"<rewritten task>\"}\n```\n";
  return {gateway::ChatMessage::system(sys.str()), gateway::ChatMessage::user(user.str())};
}

namespace {

std::string refined_instruction(const std::string& reply, const std::string& fallback) {
  auto parsed = taskgen::parse_task_blocks(reply);
  if (!parsed.empty()) return parsed.front().instruction;
  auto first = reply.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return fallback;
  auto last = reply.find_last_not_of(" \t\r\n");
  return reply.substr(first, last - first + 1);
}

}  // namespace

std::string verification_trajectory_file(const std::string& task_id, const std::string& model_id, int revision) {
  return "trajectories/" + storage::safe_name(task_id) + "." + storage::safe_name(model_id) + ".verify-r" +
         std::to_string(revision) + ".json";
}

VerifyOutcome verify_task(const TaskSpec& task, protocol::Session& session, const std::vector<protocol::ToolSpec>& tools,
                          const gateway::ModelConfig& frontier, const VerifyBudget& budget) {
  if (budget.max_attempts < 1) throw PreconditionError("verify_task: max_attempts must be >= 1");
  TaskSpec current = task;
  RejectedTask rejected;
  executor::RunOptions opts{.propagate_failures = true};

  for (int attempt = 1; attempt <= budget.max_attempts; ++attempt) {
    auto traj = executor::run_agent(current, session, tools, frontier, opts);
    auto verdict = judge_success(traj);
    events::emit("verify", "attempt",
                 {{"task_id", current.task_id},
                  {"revision", current.revision},
                  {"attempt", attempt},
                  {"outcome", verdict.success ? "success" : "failure"},
                  {"clause", to_string(verdict.clause)}});
    if (verdict.success) {
      VerifiedTask v;
      v.task = current;
      v.ground_truth_calls = traj.call_sequence();
      v.ground_truth_trajectory = verification_trajectory_file(current.task_id, frontier.model_id, current.revision);
      v.verified_by = frontier.model_id;
      v.attempts = attempt;
      v.trajectory = std::move(traj);
      return v;
    }

    FailedAttempt f;
    f.revision = current.revision;
    f.instruction = current.instruction;
    f.clause = verdict.clause;
    f.reason = verdict.reason;
    f.trajectory_file = verification_trajectory_file(current.task_id, frontier.model_id, current.revision);
    f.trajectory = traj;
    rejected.failures.push_back(std::move(f));
    rejected.attempts = attempt;

    if (attempt == budget.max_attempts) break;
    auto prompt = build_refinement_prompt(current, traj, verdict, tools);
    auto reply = gateway::complete(frontier, prompt, {});
    current.instruction = refined_instruction(reply.message.text, current.instruction);
    current.revision += 1;
  }
  rejected.task = current;
  return rejected;
}

VerifyOutcome verify_task(const TaskSpec& task, const protocol::ServerConfig& server,
                          const gateway::ModelConfig& frontier, const VerifyBudget& budget) {
  auto session = protocol::Session::connect(server);
  auto tools = session.list_tools();
  auto outcome = verify_task(task, session, tools, frontier, budget);
  session.close();
  return outcome;
}

VerifyRunSummary verify_tasks(const std::vector<TaskSpec>& tasks,
                              const std::map<std::string, protocol::ServerConfig>& servers,
                              const gateway::ModelConfig& frontier, const VerifyRunOptions& options) {
  frontier.validate();
  for (const auto& t : tasks) {
    if (!servers.contains(t.domain))
      throw PreconditionError("verify_tasks: no server configured for domain '" + t.domain + "'");
  }
  const auto& out = options.out_dir;
  const auto verified_path = out / "verified.jsonl";
  const auto rejected_path = out / "rejected.jsonl";

  // Resume: an outcome whose revision is at or beyond the input's covers it.
  std::map<std::string, std::pair<int, json>> done;  // task_id -> (input revision floor, line)
  auto remember = [&](const std::filesystem::path& file, bool verified) {
    for (auto& line : storage::read_jsonl(file)) {
      auto id = line.at("task").at("task_id").get<std::string>();
      int rev = line.at("task").value("revision", 0);
      line["_verified"] = verified;
      done[id] = {rev, std::move(line)};
    }
  };
  remember(verified_path, true);
  remember(rejected_path, false);
  auto resumed = [&](const TaskSpec& t) -> const json* {
    auto it = done.find(t.task_id);
    return it != done.end() && it->second.first >= t.revision ? &it->second.second : nullptr;
  };

  struct Slot {
    json line;
    bool verified = false;
    bool reused = false;
  };
  std::vector<Slot> slots(tasks.size());
  VerifyRunSummary summary;

  ordered_parallel_for<Slot>(
      tasks.size(), options.workers,
      [&](std::size_t i) {
        const auto& task = tasks[i];
        if (const json* prior = resumed(task)) {
          Slot s{*prior, prior->at("_verified").get<bool>(), true};
          s.line.erase("_verified");
          return s;
        }
        auto outcome = verify_task(task, servers.at(task.domain), frontier, options.budget);
        Slot s;
        if (auto* v = std::get_if<VerifiedTask>(&outcome)) {
          storage::write_json(out / v->ground_truth_trajectory, *v->trajectory);
          s.line = *v;
          s.verified = true;
        } else {
          auto& r = std::get<RejectedTask>(outcome);
          for (const auto& f : r.failures) storage::write_json(out / f.trajectory_file, *f.trajectory);
          s.line = r;
        }
        return s;
      },
      [&](std::size_t i, Slot& s) {
        if (s.reused) {
          ++summary.skipped;
        } else {
          storage::append_jsonl(s.verified ? verified_path : rejected_path, s.line);
          events::emit("verify", "task_done",
                       {{"task_id", tasks[i].task_id}, {"outcome", s.verified ? "verified" : "rejected"}});
        }
        (s.verified ? summary.verified : summary.rejected) += 1;
        slots[i] = std::move(s);
        if (options.on_progress) options.on_progress();
      });

  // Rewrite both files in task order so resumed runs match fresh ones.
  std::vector<json> verified_lines, rejected_lines;
  for (auto& s : slots) (s.verified ? verified_lines : rejected_lines).push_back(std::move(s.line));
  storage::write_jsonl(verified_path, verified_lines);
  storage::write_jsonl(rejected_path, rejected_lines);
  return summary;
}

std::vector<VerifiedTask> load_verified(const std::filesystem::path& out_dir) {
  std::vector<VerifiedTask> out;
  for (const auto& line : storage::read_jsonl(out_dir / "verified.jsonl")) {
    auto v = line.get<VerifiedTask>();
    if (!v.ground_truth_trajectory.empty() && std::filesystem::exists(out_dir / v.ground_truth_trajectory)) {
      v.trajectory = storage::read_json(out_dir / v.ground_truth_trajectory).get<Trajectory>();
    }
    v.validate();
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace mcpeval::verifier
