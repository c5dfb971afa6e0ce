#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcpeval/error.hpp"
#include "mcpeval/judge.hpp"
#include "mcpeval/matcher.hpp"

// Aggregate analytics over scored records: per (model, domain) cells,
// unweighted per-model averages, the execution-completion gap, Pearson
// correlations between scoring methods, and rendered reports.
namespace mcpeval::reporting {

using json = nlohmann::json;

inline constexpr int kReportSchema = 1;

/// Mean and sample (n-1) standard deviation. A single sample reports std 0.
struct Stat {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;

  bool single_sample() const noexcept { return n == 1; }
};

Stat describe(std::span<const double> values);

/// Everything aggregation needs from one evaluated task.
struct ScoredRecord {
  std::string model_id;
  std::string domain;
  std::string task_id;
  bool final_answer = false;  // trajectory terminated with a final answer
  matcher::TaskMatchReport match;
  std::optional<judge::JudgeVerdict> judge;
};

void to_json(json& j, const ScoredRecord& r);
void from_json(const json& j, ScoredRecord& r);

struct DomainSummary {
  std::string domain;
  std::string model_id;
  std::size_t n_tasks = 0;
  double strict_rate = 0.0;
  double flex_rate = 0.0;
  double success_rate = 0.0;
  Stat name, param, order, overall;
  std::size_t n_judged = 0;
  std::optional<Stat> trajectory, completion;  // absent without judge data
  std::optional<double> gap;
  std::map<std::string, Stat> aspects;
};

/// Unweighted means of a model's domain cells.
struct ModelSummary {
  std::string model_id;
  std::size_t n_tasks = 0;
  double strict_rate = 0.0;
  double flex_rate = 0.0;
  double success_rate = 0.0;
  double name = 0.0, param = 0.0, order = 0.0, overall = 0.0;
  std::optional<double> trajectory, completion, combined, gap;
};

/// Pooled statistics over every record.
struct OverallStats {
  std::size_t n_records = 0;
  std::size_t n_judged = 0;
  Stat overall;
  std::optional<Stat> trajectory, completion;
  std::optional<double> gap;
};

struct Correlation {
  std::string x, y;
  std::size_t n = 0;
  double r = 0.0;
  double p_value = 1.0;
};

struct CorrelationBlock {
  std::vector<Correlation> pairs;
  std::vector<std::string> errors;  // pairings that could not be computed
};

struct Ranking {
  std::string metric;
  std::vector<std::pair<std::string, double>> order;  // best first
};

struct ModelDiagnostics {
  std::string model_id;
  std::vector<matcher::ToolStats> tools;
  std::map<std::string, std::size_t> missing_tools;
  std::map<std::string, std::size_t> extra_tools;
  std::map<std::string, std::size_t> param_mismatches;  // "tool.param" -> count
};

struct RunReport {
  std::vector<std::string> models;   // sorted
  std::vector<std::string> domains;  // sorted
  std::vector<DomainSummary> cells;  // model-major, then domain
  std::vector<ModelSummary> model_summaries;
  OverallStats overall;
  std::vector<Ranking> rankings;
  CorrelationBlock correlations;
  std::vector<ModelDiagnostics> diagnostics;
  json metadata = json::object();

  const DomainSummary* cell(const std::string& model, const std::string& domain) const;
};

/// Correlation or aggregation precondition failure.
class AnalysisError : public Error {
 public:
  using Error::Error;
};

/// Builds the full report; correlation failures are recorded, not thrown.
/// Throws AnalysisError for empty input.
RunReport aggregate(std::span<const ScoredRecord> records, json metadata = json::object());

/// Pearson r. Throws AnalysisError naming a zero-variance series or when
/// fewer than 3 points are given.
double pearson(std::span<const double> x, std::span<const double> y, const std::string& x_name = "x",
               const std::string& y_name = "y");

/// Two-sided p-value of r under H0: rho = 0 (Student t, n-2 dof).
double pearson_p_value(double r, std::size_t n);

/// The four cross-method pairings over cells that have judge data. Throws
/// AnalysisError when fewer than 3 such cells exist or a series is constant.
CorrelationBlock correlate(const RunReport& report);

void to_json(json& j, const RunReport& r);

enum class Format { json, markdown };

std::string render(const RunReport& report, Format format);

/// "83.9%" style rate and "0.839" style score formatting.
std::string format_rate(double rate);
std::string format_score(double score);

}  // namespace mcpeval::reporting
