#include "mcpeval/pipeline.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <map>
#include <mutex>
#include <set>

#include "mcpeval/error.hpp"
#include "mcpeval/events.hpp"
#include "mcpeval/executor.hpp"
#include "mcpeval/fixtures.hpp"
#include "mcpeval/hash.hpp"
#include "mcpeval/judge.hpp"
#include "mcpeval/reporting.hpp"
#include "mcpeval/storage.hpp"
#include "mcpeval/taskgen.hpp"
#include "mcpeval/verifier.hpp"
#include "mcpeval/worker_pool.hpp"

namespace mcpeval::pipeline {
namespace {

gateway::ModelConfig model_field(const json& doc, const char* key) {
  if (!doc.contains(key) || doc[key].is_null()) return {};
  if (!doc[key].is_object()) throw ParseError(std::string("config: \"") + key + "\" must be an object");
  return doc[key].get<gateway::ModelConfig>();
}

protocol::ServerConfig server_entry(const json& entry, std::size_t index) {
  if (!entry.is_object()) throw ParseError("config: servers[" + std::to_string(index) + "] must be an object");
  if (entry.contains("fixture")) {
    auto cfg = fixtures::launch_fixture(entry["fixture"].get<std::string>());
    if (entry.contains("id")) cfg.id = entry["id"].get<std::string>();
    if (entry.contains("call_timeout_ms")) cfg.call_timeout = protocol::Millis(entry["call_timeout_ms"].get<std::int64_t>());
    if (entry.contains("connect_timeout_ms"))
      cfg.connect_timeout = protocol::Millis(entry["connect_timeout_ms"].get<std::int64_t>());
    return cfg;
  }
  auto cfg = entry.get<protocol::ServerConfig>();
  cfg.validate();
  return cfg;
}

std::size_t count_lines(const fs::path& file) { return storage::read_jsonl(file).size(); }

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("config must be a JSON object");
  PipelineConfig c;
  c.source = doc;
  if (!doc.contains("servers") || !doc["servers"].is_array() || doc["servers"].empty()) {
    throw ParseError("config: \"servers\" must be a non-empty list of server configs");
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < doc["servers"].size(); ++i) {
    auto cfg = server_entry(doc["servers"][i], i);
    if (cfg.id.empty()) throw ParseError("config: servers[" + std::to_string(i) + "] needs an id");
    if (!ids.insert(cfg.id).second) throw ParseError("config: duplicate server id '" + cfg.id + "' in \"servers\"");
    c.servers.push_back(std::move(cfg));
  }
  c.task_model = model_field(doc, "task_model");
  c.frontier_model = model_field(doc, "frontier_model");
  c.judge_model = model_field(doc, "judge_model");
  if (doc.contains("candidates")) {
    if (!doc["candidates"].is_array()) throw ParseError("config: \"candidates\" must be a list");
    std::set<std::string> seen;
    for (const auto& m : doc["candidates"]) {
      auto cfg = m.get<gateway::ModelConfig>();
      if (!seen.insert(cfg.model_id).second)
        throw ParseError("config: duplicate candidate model '" + cfg.model_id + "'");
      c.candidates.push_back(std::move(cfg));
    }
  }
  if (doc.contains("generation")) {
    const auto& g = doc["generation"];
    c.generation_count = g.value("count", c.generation_count);
    if (g.contains("seed_style") && g["seed_style"].is_string()) c.seed_style = g["seed_style"].get<std::string>();
  }
  if (doc.contains("verify")) c.verify_max_attempts = doc["verify"].value("max_attempts", c.verify_max_attempts);
  if (doc.contains("judge")) c.judge_attempts = doc["judge"].value("attempts", c.judge_attempts);
  if (doc.contains("match")) c.match = doc["match"].get<matcher::MatchConfig>();
  c.match.validate();
  c.workers = doc.value("workers", c.workers);
  c.seed = doc.value("seed", c.seed);
  c.out = doc.value("out", std::string("runs/latest"));
  if (c.generation_count < 1) throw ParseError("config: generation.count must be >= 1");
  if (c.verify_max_attempts < 1) throw ParseError("config: verify.max_attempts must be >= 1");
  if (c.judge_attempts < 1) throw ParseError("config: judge.attempts must be >= 1");
  if (c.workers < 1) throw ParseError("config: workers must be >= 1");
  c.apply_seed(c.seed);
  return c;
}

json PipelineConfig::to_json() const {
  json j = source;
  j["generation"] = {{"count", generation_count}, {"seed_style", seed_style ? json(*seed_style) : json(nullptr)}};
  j["verify"] = {{"max_attempts", verify_max_attempts}};
  j["judge"] = {{"attempts", judge_attempts}};
  j["match"] = match;
  j["workers"] = workers;
  j["seed"] = seed;
  j["out"] = out.string();
  return j;
}

std::string PipelineConfig::hash() const {
  json j = to_json();
  j.erase("out");
  j.erase("workers");
  return sha256_hex(j.dump());
}

void PipelineConfig::apply_seed(std::int64_t s) {
  seed = s;
  auto seed_model = [&](gateway::ModelConfig& m) {
    if (!m.seed) m.seed = s;
  };
  seed_model(task_model);
  seed_model(frontier_model);
  seed_model(judge_model);
  for (auto& m : candidates) seed_model(m);
}

PipelineConfig load_config(const fs::path& file) { return PipelineConfig::from_json(storage::read_json(file)); }

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::generate: return "generate";
    case Stage::verify: return "verify";
    case Stage::evaluate: return "evaluate";
    case Stage::analyze: return "analyze";
    case Stage::judge: return "judge";
    case Stage::report: return "report";
  }
  return "generate";
}

std::optional<Stage> stage_from_string(std::string_view s) {
  for (auto st : kAllStages)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

std::string_view status_stage(Stage s) {
  switch (s) {
    case Stage::generate: return "generating";
    case Stage::verify: return "verifying";
    case Stage::evaluate:
    case Stage::analyze: return "evaluating";
    case Stage::judge: return "judging";
    case Stage::report: return "reporting";
  }
  return "generating";
}

std::string match_file(const std::string& model_id) { return "match." + storage::safe_name(model_id) + ".jsonl"; }
std::string analysis_file(const std::string& model_id) {
  return "analysis." + storage::safe_name(model_id) + ".json";
}
std::string judge_summary_file(const std::string& model_id) {
  return "judge." + storage::safe_name(model_id) + ".jsonl";
}
std::string judgment_file(const std::string& task_id, const std::string& model_id, const std::string& judge_id) {
  return "judgments/" + storage::safe_name(task_id) + "." + storage::safe_name(model_id) + "." +
         storage::safe_name(judge_id) + ".json";
}

// --- run lock ----------------------------------------------------------------

namespace {

bool pid_alive(pid_t pid) { return pid > 0 && (::kill(pid, 0) == 0 || errno == EPERM); }

pid_t lock_owner(const fs::path& path) {
  try {
    return static_cast<pid_t>(std::stol(storage::read_text(path)));
  } catch (...) {
    return 0;
  }
}

}  // namespace

RunLock::RunLock(const fs::path& out_dir) : path_(out_dir / ".lock") {
  fs::create_directories(out_dir);
  for (int tries = 0; tries < 2; ++tries) {
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY | O_CLOEXEC, 0644);
    if (fd >= 0) {
      auto pid = std::to_string(::getpid());
      [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) throw Error("cannot create lock " + path_.string());
    auto owner = lock_owner(path_);
    if (owner == ::getpid() || pid_alive(owner)) break;
    fs::remove(path_);  // stale
  }
  throw PreconditionError("run " + out_dir.string() + " is already being processed (lock held)");
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

bool RunLock::is_locked(const fs::path& out_dir) {
  auto path = out_dir / ".lock";
  return fs::exists(path) && pid_alive(lock_owner(path));
}

// --- status ------------------------------------------------------------------

json read_status(const fs::path& out_dir) {
  auto path = out_dir / "status.json";
  if (!fs::exists(path)) return nullptr;
  return storage::read_json(path);
}

void init_run(const fs::path& out_dir, const PipelineConfig& config) {
  fs::create_directories(out_dir);
  storage::write_json(out_dir / "config.json", config.to_json());
  if (!fs::exists(out_dir / "status.json")) {
    storage::write_json(out_dir / "status.json",
                        {{"run_id", out_dir.filename().string()},
                         {"created_at", storage::utc_now_iso()},
                         {"stage", "generating"},
                         {"counts", {{"tasks", 0}, {"verified", 0}, {"evaluated", 0}, {"judged", 0}}},
                         {"config_hash", config.hash()}});
  }
}

// --- pipeline ----------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig config, StageOptions options) : config_(std::move(config)), options_(options) {
  if (config_.out.empty()) throw PreconditionError("pipeline: output directory is not set");
  init_run(config_.out, config_);
  if (auto st = read_status(config_.out); st.is_object()) {
    const auto& c = st.value("counts", json::object());
    counts_ = {c.value("tasks", std::size_t{0}), c.value("verified", std::size_t{0}),
               c.value("evaluated", std::size_t{0}), c.value("judged", std::size_t{0})};
    stage_ = st.value("stage", stage_);
  }
}

void Pipeline::write_status() {
  auto prior = read_status(config_.out);
  json st = prior.is_object() ? prior : json::object();
  st["run_id"] = config_.out.filename().string();
  if (!st.contains("created_at")) st["created_at"] = storage::utc_now_iso();
  st["updated_at"] = storage::utc_now_iso();
  st["stage"] = stage_;
  st["counts"] = {{"tasks", counts_.tasks},
                  {"verified", counts_.verified},
                  {"evaluated", counts_.evaluated},
                  {"judged", counts_.judged}};
  st["config_hash"] = config_.hash();
  if (error_.empty()) st.erase("error");
  else st["error"] = error_;
  storage::write_json(config_.out / "status.json", st);
}

void Pipeline::refresh_counts() {
  static std::mutex mu;
  std::lock_guard lock(mu);
  const auto& out = config_.out;
  Counts fresh;
  fresh.tasks = count_lines(out / "tasks.jsonl");
  fresh.verified = count_lines(out / "verified.jsonl");
  for (const auto& m : config_.candidates) {
    fresh.evaluated += count_lines(out / executor::records_file(m.model_id));
    for (const auto& line : storage::read_jsonl(out / judge_summary_file(m.model_id)))
      fresh.judged += line.contains("error") ? 0 : 1;
  }
  counts_.tasks = std::max(counts_.tasks, fresh.tasks);
  counts_.verified = std::max(counts_.verified, fresh.verified);
  counts_.evaluated = std::max(counts_.evaluated, fresh.evaluated);
  counts_.judged = std::max(counts_.judged, fresh.judged);
  write_status();
}

void Pipeline::set_stage(std::string_view stage) {
  stage_ = stage;
  error_.clear();
  write_status();
}

void Pipeline::mark_failed(const std::string& message) {
  stage_ = "failed";
  error_ = message;
  write_status();
}

void Pipeline::run_stage(Stage stage) {
  set_stage(status_stage(stage));
  events::emit(to_string(stage), "stage_started", {{"out", config_.out.string()}});
  try {
    switch (stage) {
      case Stage::generate: generate(); break;
      case Stage::verify: verify(); break;
      case Stage::evaluate: evaluate(); break;
      case Stage::analyze: analyze(); break;
      case Stage::judge: judge(); break;
      case Stage::report: report(); break;
    }
  } catch (const std::exception& e) {
    events::emit(to_string(stage), "stage_failed", {{"error", e.what()}});
    mark_failed(std::string(to_string(stage)) + ": " + e.what());
    throw;
  }
  refresh_counts();
  if (stage == Stage::report) set_stage("done");
  events::emit(to_string(stage), "stage_finished", {{"out", config_.out.string()}});
}

void Pipeline::run_all() {
  for (auto stage : kAllStages) run_stage(stage);
}

void Pipeline::generate() {
  config_.task_model.validate();
  const auto path = config_.out / "tasks.jsonl";
  auto existing = storage::read_jsonl(path);
  std::set<std::string> have;
  for (const auto& t : existing) have.insert(t.value("domain", std::string()));

  for (const auto& server : config_.servers) {
    if (have.contains(server.id)) {
      events::emit("generate", "domain_skipped", {{"domain", server.id}, {"reason", "already generated"}});
      continue;
    }
    taskgen::GenerationRequest req{server, config_.generation_count, config_.seed_style, config_.task_model};
    for (const auto& t : taskgen::generate_tasks(req)) storage::append_jsonl(path, t);
    refresh_counts();
  }
}

void Pipeline::verify() {
  config_.frontier_model.validate();
  std::vector<taskgen::TaskSpec> tasks;
  for (const auto& line : storage::read_jsonl(config_.out / "tasks.jsonl")) tasks.push_back(line.get<taskgen::TaskSpec>());
  if (tasks.empty()) throw Error("no tasks to verify (run generate first)");
  std::map<std::string, protocol::ServerConfig> servers;
  for (const auto& s : config_.servers) servers.emplace(s.id, s);
  verifier::VerifyRunOptions opts;
  opts.out_dir = config_.out;
  opts.budget.max_attempts = config_.verify_max_attempts;
  opts.workers = config_.workers;
  opts.on_progress = [this] { refresh_counts(); };
  auto summary = verifier::verify_tasks(tasks, servers, config_.frontier_model, opts);
  events::emit("verify", "summary",
               {{"verified", summary.verified}, {"rejected", summary.rejected}, {"skipped", summary.skipped}});
}

void Pipeline::evaluate() {
  if (config_.candidates.empty()) throw PreconditionError("config: \"candidates\" must be non-empty to evaluate");
  auto verified = verifier::load_verified(config_.out);
  if (verified.empty()) throw Error("no verified tasks to evaluate (run verify first)");
  std::map<std::string, protocol::ServerConfig> servers;
  for (const auto& s : config_.servers) servers.emplace(s.id, s);
  executor::EvalOptions opts;
  opts.out_dir = config_.out;
  opts.workers = config_.workers;
  opts.on_progress = [this] { refresh_counts(); };
  for (const auto& model : config_.candidates) executor::evaluate_model(verified, servers, model, opts);
}

void Pipeline::analyze() {
  if (config_.candidates.empty()) throw PreconditionError("config: \"candidates\" must be non-empty to analyze");
  auto verified = verifier::load_verified(config_.out);
  std::size_t total = 0;
  for (const auto& model : config_.candidates) {
    auto records = executor::load_records(config_.out, model.model_id, verified);
    total += records.size();
    std::vector<json> lines;
    std::vector<matcher::TaskMatchReport> reports;
    std::size_t strict = 0, flex = 0;
    for (const auto& r : records) {
      auto pred = r.candidate.call_sequence();
      auto m = matcher::score_task(r.verified.ground_truth_calls, pred, config_.match);
      strict += m.strict_pass;
      flex += m.flex_pass;
      reporting::ScoredRecord sr{model.model_id, r.verified.task.domain, r.verified.task.task_id,
                                 r.candidate.terminated == executor::Termination::final, m, std::nullopt};
      lines.push_back(sr);
      reports.push_back(std::move(m));
    }
    storage::write_jsonl(config_.out / match_file(model.model_id), lines);
    if (records.empty()) continue;
    double n = static_cast<double>(records.size());
    storage::write_json(config_.out / analysis_file(model.model_id),
                        {{"model_id", model.model_id},
                         {"n_records", records.size()},
                         {"strict_rate", static_cast<double>(strict) / n},
                         {"flex_rate", static_cast<double>(flex) / n},
                         {"tools", matcher::tool_success_rates(reports)}});
    events::emit("analyze", "model_done", {{"model", model.model_id}, {"records", records.size()}});
  }
  if (total == 0) throw Error("no records to analyze (run evaluate first)");
}

void Pipeline::judge() {
  config_.judge_model.validate();
  auto verified = verifier::load_verified(config_.out);
  const auto& judge_id = config_.judge_model.model_id;
  for (const auto& model : config_.candidates) {
    auto records = executor::load_records(config_.out, model.model_id, verified);
    if (records.empty()) continue;
    const auto summary_path = config_.out / judge_summary_file(model.model_id);
    std::vector<json> lines(records.size());
    fs::remove(summary_path);
    ordered_parallel_for<json>(
        records.size(), config_.workers,
        [&](std::size_t i) -> json {
          const auto& r = records[i];
          const auto file = judgment_file(r.verified.task.task_id, model.model_id, judge_id);
          json line{{"task_id", r.verified.task.task_id}, {"model_id", model.model_id}, {"judge_model", judge_id},
                    {"judgment", file}};
          judge::JudgeVerdict v;
          if (!options_.force_rejudge && fs::exists(config_.out / file)) {
            v = storage::read_json(config_.out / file).get<judge::JudgeVerdict>();
          } else {
            try {
              v = judge::judge_record(r, config_.judge_model, config_.judge_attempts);
            } catch (const JudgeFailureError& e) {
              events::warn("judge", "judge failed", {{"task_id", r.verified.task.task_id}, {"error", e.what()}});
              line["error"] = e.what();
              return line;
            }
            storage::write_json(config_.out / file, v);
          }
          line["trajectory_score"] = v.trajectory_score;
          line["completion_score"] = v.completion_score;
          line["combined"] = v.combined;
          return line;
        },
        [&](std::size_t i, json& line) {
          storage::append_jsonl(summary_path, line);
          lines[i] = std::move(line);
          refresh_counts();
        });
    storage::write_jsonl(summary_path, lines);
  }
}

void Pipeline::report() {
  std::vector<reporting::ScoredRecord> scored;
  const auto& judge_id = config_.judge_model.model_id;
  for (const auto& model : config_.candidates) {
    for (const auto& line : storage::read_jsonl(config_.out / match_file(model.model_id))) {
      auto sr = line.get<reporting::ScoredRecord>();
      if (!judge_id.empty()) {
        auto file = config_.out / judgment_file(sr.task_id, sr.model_id, judge_id);
        if (fs::exists(file)) sr.judge = storage::read_json(file).get<judge::JudgeVerdict>();
      }
      scored.push_back(std::move(sr));
    }
  }
  if (scored.empty()) throw Error("no records to report (run analyze first)");
  json meta{{"config_hash", config_.hash()},
            {"judge_model", judge_id},
            {"tasks", count_lines(config_.out / "tasks.jsonl")},
            {"verified", count_lines(config_.out / "verified.jsonl")},
            {"rejected", count_lines(config_.out / "rejected.jsonl")},
            {"generated_at", storage::utc_now_iso()}};
  auto rep = reporting::aggregate(scored, meta);
  storage::write_atomic(config_.out / "report.json", reporting::render(rep, reporting::Format::json));
  storage::write_atomic(config_.out / "report.md", reporting::render(rep, reporting::Format::markdown));
}

}  // namespace mcpeval::pipeline
