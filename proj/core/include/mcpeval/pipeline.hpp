#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcpeval/gateway.hpp"
#include "mcpeval/matcher.hpp"
#include "mcpeval/protocol.hpp"

// Stage orchestration over one run directory: generate -> verify -> evaluate
// -> analyze -> judge -> report, with a polled status file and a run lock.
namespace mcpeval::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct PipelineConfig {
  std::vector<protocol::ServerConfig> servers;
  gateway::ModelConfig task_model;
  gateway::ModelConfig frontier_model;
  gateway::ModelConfig judge_model;
  std::vector<gateway::ModelConfig> candidates;
  int generation_count = 5;
  std::optional<std::string> seed_style;
  int verify_max_attempts = 3;
  int judge_attempts = 3;
  matcher::MatchConfig match;
  std::size_t workers = 4;
  std::int64_t seed = 0;
  fs::path out;

  /// Raw document as loaded (after overrides), hashed for provenance.
  json source = json::object();

  /// Servers given as {"fixture": name} resolve to the bundled fixture's
  /// launch spec; "id" may rename it.
  static PipelineConfig from_json(const json& doc);
  json to_json() const;
  std::string hash() const;

  /// Model ids seeded with `seed` unless they carry their own.
  void apply_seed(std::int64_t seed);
};

PipelineConfig load_config(const fs::path& file);

enum class Stage { generate, verify, evaluate, analyze, judge, report };

std::string_view to_string(Stage s);
std::optional<Stage> stage_from_string(std::string_view s);
inline constexpr Stage kAllStages[] = {Stage::generate, Stage::verify, Stage::evaluate,
                                       Stage::analyze,  Stage::judge,  Stage::report};

/// Lifecycle stage shown in status.json.
std::string_view status_stage(Stage s);

/// Counts in status.json; never decrease for a run.
struct Counts {
  std::size_t tasks = 0, verified = 0, evaluated = 0, judged = 0;
};

struct StageOptions {
  /// Re-judge records even when a cached verdict exists.
  bool force_rejudge = false;
};

/// Exclusive per-run lock (<out>/.lock), released on destruction. A lock
/// held by a dead process is taken over.
class RunLock {
 public:
  explicit RunLock(const fs::path& out_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

  static bool is_locked(const fs::path& out_dir);

 private:
  fs::path path_;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config, StageOptions options = {});

  void run_stage(Stage stage);
  void run_all();

  const PipelineConfig& config() const noexcept { return config_; }
  const fs::path& out_dir() const noexcept { return config_.out; }

  /// Marks the run failed in status.json.
  void mark_failed(const std::string& message);

 private:
  void generate();
  void verify();
  void evaluate();
  void analyze();
  void judge();
  void report();

  void set_stage(std::string_view stage);
  void refresh_counts();
  void write_status();

  PipelineConfig config_;
  StageOptions options_;
  std::string stage_ = "generating";
  Counts counts_;
  std::string error_;
};

/// Reads <out>/status.json (null when absent).
json read_status(const fs::path& out_dir);

/// Initializes a run directory: writes config.json and an initial status.
void init_run(const fs::path& out_dir, const PipelineConfig& config);

/// Relative paths of per-model stage outputs.
std::string match_file(const std::string& model_id);
std::string analysis_file(const std::string& model_id);
std::string judge_summary_file(const std::string& model_id);
std::string judgment_file(const std::string& task_id, const std::string& model_id, const std::string& judge_id);

}  // namespace mcpeval::pipeline
