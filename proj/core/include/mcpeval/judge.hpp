#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcpeval/gateway.hpp"
#include "mcpeval/taskgen.hpp"
#include "mcpeval/trajectory.hpp"

namespace mcpeval::executor {
struct EvalRecord;
}

// Rubric-based LLM judging of a trajectory (seven execution aspects) and its
// final response (four completion aspects).
namespace mcpeval::judge {

using json = nlohmann::json;

inline constexpr std::array<std::string_view, 7> kTrajectoryAspects = {
    "planning", "execution_flow", "tool_selection", "tool_usage", "adaptability", "efficiency", "context_awareness"};
inline constexpr std::array<std::string_view, 4> kCompletionAspects = {"requirement_coverage", "accuracy",
                                                                       "completeness", "usefulness"};

struct AspectScore {
  double score = 0.0;
  std::string justification;

  friend bool operator==(const AspectScore&, const AspectScore&) = default;
};

/// All eleven aspects keyed by snake_case name.
struct AspectScores {
  std::map<std::string, AspectScore> aspects;

  double trajectory_mean() const;
  double completion_mean() const;
  /// Throws PreconditionError unless all eleven scores are present and in [0,1].
  void validate() const;

  friend bool operator==(const AspectScores&, const AspectScores&) = default;
};

/// The strict JSON object the judge is asked to emit.
json render_scores(const AspectScores& scores);

struct JudgeVerdict {
  AspectScores scores;
  double trajectory_score = 0.0;
  double completion_score = 0.0;
  double combined = 0.0;
  std::string judge_model;
  std::string raw_response_hash;

  static JudgeVerdict from_scores(AspectScores scores, std::string judge_model, std::string raw_response_hash);
  void validate() const;
};

void to_json(json& j, const JudgeVerdict& v);
void from_json(const json& j, JudgeVerdict& v);

/// Human-readable rubric label, e.g. "Requirement Coverage".
std::string aspect_label(std::string_view aspect);

std::vector<gateway::ChatMessage> build_judge_prompt(const taskgen::TaskSpec& task,
                                                     const executor::Trajectory& trajectory);

/// Scores from the first JSON object in `raw`. Out-of-range scores are
/// clamped with a warning; a missing aspect raises ParseError naming it.
AspectScores parse_verdict(std::string_view raw);

inline constexpr int kDefaultJudgeAttempts = 3;

/// Prompts the judge and parses its verdict, re-asking on malformed output.
/// After `attempts` malformed replies raises JudgeFailureError.
JudgeVerdict judge_trajectory(const taskgen::TaskSpec& task, const executor::Trajectory& trajectory,
                              const gateway::ModelConfig& judge_model, int attempts = kDefaultJudgeAttempts);

/// judge_trajectory over a record's task and candidate trajectory.
JudgeVerdict judge_record(const executor::EvalRecord& record, const gateway::ModelConfig& judge_model,
                          int attempts = kDefaultJudgeAttempts);

}  // namespace mcpeval::judge
