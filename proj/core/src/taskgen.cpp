#include "mcpeval/taskgen.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "mcpeval/error.hpp"
#include "mcpeval/events.hpp"
#include "mcpeval/hash.hpp"

namespace mcpeval::taskgen {

void to_json(json& j, const TaskSpec& t) {
  j = json{{"task_id", t.task_id},
           {"domain", t.domain},
           {"instruction", t.instruction},
           {"expected_tools_hint", t.expected_tools_hint ? json(*t.expected_tools_hint) : json(nullptr)},
           {"created_by", t.created_by},
           {"revision", t.revision}};
}

void from_json(const json& j, TaskSpec& t) {
  t.task_id = j.at("task_id").get<std::string>();
  t.domain = j.value("domain", std::string());
  t.instruction = j.at("instruction").get<std::string>();
  if (j.contains("expected_tools_hint") && j["expected_tools_hint"].is_array()) {
    t.expected_tools_hint = j["expected_tools_hint"].get<std::vector<std::string>>();
  } else {
    t.expected_tools_hint.reset();
  }
  t.created_by = j.value("created_by", std::string());
  t.revision = j.value("revision", 0);
  if (t.instruction.empty()) throw ParseError("task " + t.task_id + ": instruction must be non-empty");
  if (t.revision < 0) throw ParseError("task " + t.task_id + ": revision must be non-negative");
}

std::string task_id_for(std::string_view domain, std::string_view instruction) {
  std::string material(domain);
  material.push_back('\0');
  material.append(instruction);
  return sha256_hex(material).substr(0, 16);
}

std::vector<gateway::ChatMessage> build_generation_prompt(const std::vector<protocol::ToolSpec>& tools, int count,
                                                          const std::optional<std::string>& seed_style) {
  if (tools.empty()) throw PreconditionError("build_generation_prompt: tool list is empty");
  if (count < 1) throw PreconditionError("build_generation_prompt: count must be >= 1");

  std::ostringstream sys;
  sys << "You design evaluation tasks for an AI assistant that works by calling tools on a "
         "Model Context Protocol server. Every task you write must be solvable with the listed "
         "tools alone.";

  std::ostringstream user;
  user << "Available tools:\n\n";
  for (const auto& t : tools) {
    user << "### " << t.name << "\n";
    if (!t.description.empty()) user << t.description << "\n";
    user << "Parameters (JSON schema):\n" << t.input_schema.dump(2) << "\n\n";
  }
  user << "Write exactly " << count << " distinct task" << (count == 1 ? "" : "s") << ".\n"
       << "Rules:\n"
       << "- Phrase each task as a request a real user would make.\n"
       << "- Put a concrete value for every required parameter of every tool the task needs into "
          "the task text itself, so the tool calls can be filled in without guessing.\n"
       << "- Each task should need at least one tool call.\n";
  if (seed_style && !seed_style->empty()) user << "- Style guidance: " << *seed_style << "\n";
  user << "\nEmit each task as its own fenced JSON block and nothing else, in this format:\n"
       << "```json\n{\"instruction\": \"<task text>\", \"expected_tools\": [\"<tool name>\", ...]}\n```\n";

  return {gateway::ChatMessage::system(sys.str()), gateway::ChatMessage::user(user.str())};
}

namespace {

struct Fence {
  std::string info;  // text after the opening backticks
  std::string body;
};

std::vector<Fence> fenced_blocks(std::string_view raw) {
  std::vector<Fence> out;
  std::size_t pos = 0;
  while (true) {
    auto open = raw.find("```", pos);
    if (open == std::string_view::npos) break;
    auto line_end = raw.find('\n', open + 3);
    if (line_end == std::string_view::npos) break;
    auto close = raw.find("```", line_end + 1);
    if (close == std::string_view::npos) break;
    Fence f;
    f.info = std::string(raw.substr(open + 3, line_end - open - 3));
    while (!f.info.empty() && (f.info.back() == '\r' || f.info.back() == ' ')) f.info.pop_back();
    f.body = std::string(raw.substr(line_end + 1, close - line_end - 1));
    out.push_back(std::move(f));
    pos = close + 3;
  }
  return out;
}

}  // namespace

ParseOutcome parse_task_blocks_detailed(std::string_view raw, const std::string& domain) {
  ParseOutcome out;
  std::map<std::string, int> seen;
  for (const auto& fence : fenced_blocks(raw)) {
    if (!fence.info.empty() && fence.info != "json") continue;
    auto doc = json::parse(fence.body, nullptr, false);
    bool ok = !doc.is_discarded() && doc.is_object() && doc.contains("instruction") && doc["instruction"].is_string() &&
              !doc["instruction"].get<std::string>().empty();
    std::optional<std::vector<std::string>> hint;
    if (ok && doc.contains("expected_tools")) {
      const auto& et = doc["expected_tools"];
      ok = et.is_array() && std::all_of(et.begin(), et.end(), [](const json& e) { return e.is_string(); });
      if (ok) hint = et.get<std::vector<std::string>>();
    }
    if (!ok) {
      ++out.malformed_blocks;
      continue;
    }
    TaskSpec t;
    t.domain = domain;
    t.instruction = doc["instruction"].get<std::string>();
    t.expected_tools_hint = std::move(hint);
    std::string base = task_id_for(domain, t.instruction);
    int k = seen[base]++;
    t.task_id = k == 0 ? base : base + "-" + std::to_string(k);
    out.tasks.push_back(std::move(t));
  }
  return out;
}

std::vector<TaskSpec> parse_task_blocks(std::string_view raw, const std::string& domain) {
  return parse_task_blocks_detailed(raw, domain).tasks;
}

std::string render_task_blocks(const std::vector<TaskSpec>& tasks) {
  std::string out;
  for (const auto& t : tasks) {
    json block = {{"instruction", t.instruction}};
    if (t.expected_tools_hint) block["expected_tools"] = *t.expected_tools_hint;
    out += "```json\n" + block.dump() + "\n```\n";
  }
  return out;
}

std::vector<TaskSpec> generate_tasks(const GenerationRequest& request, const std::vector<protocol::ToolSpec>& tools) {
  if (request.count < 1) throw PreconditionError("generate_tasks: count must be >= 1");
  request.task_model.validate();
  auto prompt = build_generation_prompt(tools, request.count, request.seed_style);
  auto turn = gateway::complete(request.task_model, prompt, {});

  auto parsed = parse_task_blocks_detailed(turn.message.text, request.server.id);
  for (std::size_t i = 0; i < parsed.malformed_blocks; ++i) {
    events::warn("generate", "skipping malformed task block", {{"domain", request.server.id}});
  }
  if (parsed.tasks.empty()) {
    throw Error("generate_tasks: task model produced no parseable tasks for '" + request.server.id + "'");
  }
  if (parsed.tasks.size() > static_cast<std::size_t>(request.count)) parsed.tasks.resize(request.count);
  for (auto& t : parsed.tasks) {
    t.created_by = request.task_model.model_id;
    t.revision = 0;
  }
  events::emit("generate", "tasks_generated", {{"domain", request.server.id}, {"count", parsed.tasks.size()}});
  return std::move(parsed.tasks);
}

std::vector<TaskSpec> generate_tasks(const GenerationRequest& request) {
  auto session = protocol::Session::connect(request.server);
  auto tools = session.list_tools();
  session.close();
  return generate_tasks(request, tools);
}

}  // namespace mcpeval::taskgen
