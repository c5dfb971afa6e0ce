#include "mcpeval/judge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <sstream>

#include "mcpeval/error.hpp"
#include "mcpeval/events.hpp"
#include "mcpeval/executor.hpp"
#include "mcpeval/hash.hpp"

namespace mcpeval::judge {
namespace {

struct Rubric {
  std::string_view key;
  std::string_view label;
  std::string_view definition;
};

// Definitions are phrased for the judge; labels are what reports display.
constexpr std::array<Rubric, 11> kRubric = {{
    {"planning", "Planning", "Did the agent understand the request and break it into sensible steps?"},
    {"execution_flow", "Execution Flow", "Were the steps carried out in a coherent, logical order?"},
    {"tool_selection", "Tool Selection", "Were the right tools chosen for each step?"},
    {"tool_usage", "Tool Usage", "Were tools invoked with correct, well-formed parameters?"},
    {"adaptability", "Adaptability", "Did the agent react sensibly to errors or unexpected tool output?"},
    {"efficiency", "Efficiency", "Was the goal reached without redundant or wasted calls?"},
    {"context_awareness", "Context Awareness",
     "Did the agent carry forward what earlier steps and results established?"},
    {"requirement_coverage", "Requirement Coverage", "How fully does the final response address every goal of the task?"},
    {"accuracy", "Accuracy", "Is the final response factually consistent with the tool results?"},
    {"completeness", "Completeness", "Does the final response include all the information the user needs?"},
    {"usefulness", "Usefulness", "How practically helpful is the final response to the user?"},
}};

double mean_of(const AspectScores& s, std::span<const std::string_view> keys) {
  double sum = 0.0;
  for (auto k : keys) sum += s.aspects.at(std::string(k)).score;
  return sum / static_cast<double>(keys.size());
}

std::string transcript(const executor::Trajectory& t) {
  std::ostringstream out;
  std::size_t k = 0;
  for (const auto& m : t.messages) {
    using gateway::Role;
    if (m.role == Role::system) continue;
    if (m.role == Role::user) {
      out << "[user] " << m.text << "\n";
    } else if (m.role == Role::assistant) {
      if (!m.text.empty()) out << "[assistant] " << m.text << "\n";
    }
  }
  out << "\nTool calls (" << t.calls.size() << "):\n";
  for (const auto& rec : t.calls) {
    ++k;
    out << "Call " << k << ": " << rec.call.tool_name << " " << rec.call.arguments.dump() << "\n"
        << "Result " << k << (rec.result.is_error ? " [error]" : "") << ": " << rec.result.text() << "\n";
  }
  return out.str();
}

/// Index one past the brace closing the object that opens at `open`, or npos.
std::size_t object_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
    } else if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}' && --depth == 0) {
      return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<json> first_json_object(std::string_view raw) {
  for (auto open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    auto end = object_end(raw, open);
    if (end == std::string_view::npos) continue;
    auto doc = json::parse(raw.substr(open, end - open), nullptr, false);
    if (!doc.is_discarded() && doc.is_object()) return doc;
  }
  return std::nullopt;
}

}  // namespace

double AspectScores::trajectory_mean() const { return mean_of(*this, kTrajectoryAspects); }
double AspectScores::completion_mean() const { return mean_of(*this, kCompletionAspects); }

void AspectScores::validate() const {
  for (const auto& r : kRubric) {
    auto it = aspects.find(std::string(r.key));
    if (it == aspects.end()) throw PreconditionError("missing aspect " + std::string(r.key));
    if (!(it->second.score >= 0.0 && it->second.score <= 1.0))
      throw PreconditionError("aspect " + std::string(r.key) + " out of [0,1]");
  }
}

json render_scores(const AspectScores& scores) {
  json j = json::object();
  for (const auto& r : kRubric) {
    const auto& a = scores.aspects.at(std::string(r.key));
    j[std::string(r.key)] = {{"score", a.score}, {"justification", a.justification}};
  }
  return j;
}

JudgeVerdict JudgeVerdict::from_scores(AspectScores scores, std::string judge_model, std::string raw_response_hash) {
  scores.validate();
  JudgeVerdict v;
  v.trajectory_score = scores.trajectory_mean();
  v.completion_score = scores.completion_mean();
  v.combined = (v.trajectory_score + v.completion_score) / 2.0;
  v.scores = std::move(scores);
  v.judge_model = std::move(judge_model);
  v.raw_response_hash = std::move(raw_response_hash);
  return v;
}

void JudgeVerdict::validate() const {
  scores.validate();
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  if (!close(trajectory_score, scores.trajectory_mean()) || !close(completion_score, scores.completion_mean()) ||
      !close(combined, (trajectory_score + completion_score) / 2.0))
    throw PreconditionError("judge verdict aggregates disagree with its aspect scores");
}

void to_json(json& j, const JudgeVerdict& v) {
  j = json{{"scores", render_scores(v.scores)},
           {"trajectory_score", v.trajectory_score},
           {"completion_score", v.completion_score},
           {"combined", v.combined},
           {"judge_model", v.judge_model},
           {"raw_response_hash", v.raw_response_hash}};
}

void from_json(const json& j, JudgeVerdict& v) {
  AspectScores s;
  for (const auto& [k, a] : j.at("scores").items()) {
    s.aspects[k] = {a.at("score").get<double>(), a.value("justification", std::string())};
  }
  v.scores = std::move(s);
  v.trajectory_score = j.at("trajectory_score").get<double>();
  v.completion_score = j.at("completion_score").get<double>();
  v.combined = j.at("combined").get<double>();
  v.judge_model = j.value("judge_model", std::string());
  v.raw_response_hash = j.value("raw_response_hash", std::string());
}

std::string aspect_label(std::string_view aspect) {
  for (const auto& r : kRubric)
    if (r.key == aspect) return std::string(r.label);
  throw PreconditionError("unknown aspect " + std::string(aspect));
}

std::vector<gateway::ChatMessage> build_judge_prompt(const taskgen::TaskSpec& task,
                                                     const executor::Trajectory& trajectory) {
  std::ostringstream sys;
  sys << "You are an expert evaluator of tool-using AI assistants. You grade one assistant run at a time, "
         "strictly and consistently, using the rubric you are given.";

  std::ostringstream user;
  user << "## Task\n" << task.instruction << "\n\n";
  user << "## Transcript\n" << transcript(trajectory) << "\n";
  user << "## Final response\n";
  if (trajectory.final_text.empty()) {
    user << "(no final response produced; the run ended by " << executor::to_string(trajectory.terminated) << ")\n\n";
  } else {
    user << trajectory.final_text << "\n\n";
  }
  user << "## Rubric\nScore each aspect from 0.0 (worst) to 1.0 (best).\n\nTrajectory aspects:\n";
  for (std::size_t i = 0; i < kRubric.size(); ++i) {
    if (i == kTrajectoryAspects.size()) user << "\nCompletion aspects:\n";
    user << "- " << kRubric[i].label << " (" << kRubric[i].key << "): " << kRubric[i].definition << "\n";
  }
  user << "\n## Output\nReply with a single JSON object and nothing else. It must have exactly one key per "
          "aspect (the snake_case names above), each mapping to {\"score\": <number in [0,1]>, "
          "\"justification\": \"<one line>\"}.\n";
  return {gateway::ChatMessage::system(sys.str()), gateway::ChatMessage::user(user.str())};
}

AspectScores parse_verdict(std::string_view raw) {
  auto doc = first_json_object(raw);
  if (!doc) throw ParseError("judge reply contains no JSON object");
  AspectScores out;
  for (const auto& r : kRubric) {
    std::string key(r.key);
    if (!doc->contains(key)) throw ParseError("judge reply is missing aspect " + key);
    const auto& entry = (*doc)[key];
    const json* score = nullptr;
    std::string justification;
    if (entry.is_number()) {
      score = &entry;
    } else if (entry.is_object() && entry.contains("score") && entry["score"].is_number()) {
      score = &entry["score"];
      if (entry.contains("justification") && entry["justification"].is_string())
        justification = entry["justification"].get<std::string>();
    }
    if (!score) throw ParseError("judge reply has no numeric score for aspect " + key);
    double v = score->get<double>();
    if (!std::isfinite(v)) throw ParseError("judge reply has a non-finite score for aspect " + key);
    if (v < 0.0 || v > 1.0) {
      double clamped = std::clamp(v, 0.0, 1.0);
      events::warn("judge", "clamped out-of-range score", {{"aspect", key}, {"score", v}, {"clamped", clamped}});
      v = clamped;
    }
    out.aspects[key] = {v, std::move(justification)};
  }
  return out;
}

JudgeVerdict judge_trajectory(const taskgen::TaskSpec& task, const executor::Trajectory& trajectory,
                              const gateway::ModelConfig& judge_model, int attempts) {
  if (attempts < 1) throw PreconditionError("judge_trajectory: attempts must be >= 1");
  auto history = build_judge_prompt(task, trajectory);
  std::string last_raw;
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    auto reply = gateway::complete(judge_model, history, {});
    last_raw = reply.message.text;
    try {
      auto scores = parse_verdict(last_raw);
      return JudgeVerdict::from_scores(std::move(scores), judge_model.model_id, sha256_hex(last_raw));
    } catch (const ParseError& e) {
      last_error = e.what();
      events::warn("judge", "malformed verdict",
                   {{"task_id", task.task_id}, {"attempt", attempt}, {"error", last_error}});
      history.push_back(gateway::ChatMessage::assistant(last_raw));
      history.push_back(gateway::ChatMessage::user("That reply could not be used (" + last_error +
                                                   "). Reply again with only the JSON object described above."));
    }
  }
  throw JudgeFailureError("judge " + judge_model.model_id + " produced no usable verdict for task " + task.task_id +
                              " after " + std::to_string(attempts) + " attempts: " + last_error,
                          last_raw);
}

JudgeVerdict judge_record(const executor::EvalRecord& record, const gateway::ModelConfig& judge_model, int attempts) {
  return judge_trajectory(record.verified.task, record.candidate, judge_model, attempts);
}

}  // namespace mcpeval::judge
