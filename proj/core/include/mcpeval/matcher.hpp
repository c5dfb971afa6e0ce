#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcpeval/protocol.hpp"

// Tool-call correctness: aligns predicted calls with ground truth and derives
// name/param/order/overall scores, strict and flexible verdicts, and
// diagnostics.
namespace mcpeval::matcher {

using json = nlohmann::json;
using protocol::ToolCall;

struct MatchConfig {
  double w_name = 0.4;
  double w_param = 0.4;
  double w_order = 0.2;
  double param_threshold = 0.6;
  double order_threshold = 0.5;
  double numeric_rel_tol = 1e-9;
  /// When false, arguments are compared verbatim (no trim/case-fold).
  bool canonicalize = true;

  /// Weights non-negative summing to 1 (within 1e-12), thresholds in [0,1].
  void validate() const;
};

void to_json(json& j, const MatchConfig& c);
void from_json(const json& j, MatchConfig& c);

/// Sorted keys, trimmed and case-folded strings, integral floats as integers.
/// Arrays keep their order.
json canonicalize(const json& value);

/// Code-point LCS length of two UTF-8 strings.
std::size_t lcs_length(std::string_view a, std::string_view b);

/// 2·LCS(a,b) / (|a|+|b|) over code points; 1 for two empty strings.
double string_similarity(std::string_view a, std::string_view b);

/// Similarity in [0,1] of two canonicalized JSON values.
double value_similarity(const json& a, const json& b, const MatchConfig& cfg);

/// Mean similarity over the union of argument keys (missing key scores 0).
/// Fills `per_param` when given.
double argument_similarity(const json& gt_args, const json& pred_args, const MatchConfig& cfg,
                           std::map<std::string, double>* per_param = nullptr);

/// Same-name groups up to this size on both sides are solved exactly.
inline constexpr std::size_t kExhaustiveGroupLimit = 6;

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (row, col), sorted by row
  double total = 0.0;                                      // summed in row order
};

/// Maximum-weight assignment of min(rows, cols) pairs by enumeration.
/// Ties resolve to the first optimum in row-major, ascending-column order.
Assignment assign_exhaustive(const std::vector<std::vector<double>>& similarity);

/// Best-first greedy assignment of min(rows, cols) pairs.
Assignment assign_greedy(const std::vector<std::vector<double>>& similarity);

struct CallMatch {
  std::size_t gt_index = 0;
  std::size_t pred_index = 0;
  std::string tool_name;
  double param_similarity = 0.0;
  std::map<std::string, double> per_param;
};

void to_json(json& j, const CallMatch& m);

/// Pairs same-named calls, maximizing total argument similarity per name.
/// Inputs are expected to be canonicalized already.
std::vector<CallMatch> align_calls(std::span<const ToolCall> gt, std::span<const ToolCall> pred,
                                   const MatchConfig& cfg);

struct NameCount {
  std::string name;
  std::size_t count = 0;
};

struct ParamMismatch {
  std::string tool;
  std::string param;
  json gt_value;    // null when the key is absent
  json pred_value;  // null when the key is absent
  double similarity = 0.0;
};

struct TaskMatchReport {
  double name_score = 0.0;
  double param_score = 0.0;
  double order_score = 0.0;
  double overall_score = 0.0;
  bool strict_pass = false;
  bool flex_pass = false;
  std::size_t gt_count = 0;
  std::size_t pred_count = 0;
  std::vector<CallMatch> pairs;
  std::vector<NameCount> missing_tools;
  std::vector<NameCount> extra_tools;
  std::vector<ParamMismatch> param_mismatches;
};

void to_json(json& j, const TaskMatchReport& r);
void from_json(const json& j, TaskMatchReport& r);

/// Weighted combination of the three component scores.
double overall_score(double name, double param, double order, const MatchConfig& cfg);

/// Longest increasing run of gt indices once pairs are ordered by pred index,
/// divided by the pair count (1 for a single pair, 0 for none).
double order_score(std::span<const CallMatch> pairs);

/// Flexible verdict: every gt call paired, each pair at or above the param
/// threshold, order at or above the order threshold.
bool flex_verdict(std::span<const double> pair_similarities, std::size_t gt_count, double order,
                  const MatchConfig& cfg);

/// Full per-task comparison. Throws PreconditionError for an empty gt.
TaskMatchReport score_task(std::span<const ToolCall> gt, std::span<const ToolCall> pred,
                           const MatchConfig& cfg = {});

struct ToolStats {
  std::string tool;
  std::size_t times_in_gt = 0;
  std::size_t times_predicted = 0;
  std::size_t times_paired = 0;
  double pair_rate = 0.0;  // paired / times_in_gt
  double mean_param_similarity = 0.0;
};

void to_json(json& j, const ToolStats& s);

/// Per-tool statistics over a batch of reports, sorted by tool name.
std::vector<ToolStats> tool_success_rates(std::span<const TaskMatchReport> reports);

}  // namespace mcpeval::matcher
