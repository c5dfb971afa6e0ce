#include "mcpeval/cli.hpp"

#include <csignal>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcpeval/error.hpp"
#include "mcpeval/events.hpp"
#include "mcpeval/pipeline.hpp"
#include "mcpeval/service.hpp"
#include "mcpeval/storage.hpp"

namespace mcpeval::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::int64_t> seed;
  std::optional<std::size_t> workers;
  std::vector<std::string> models;
  std::optional<int> count;
  std::optional<int> max_attempts;
  std::optional<int> judge_attempts;
  bool force = false;
};

struct ServeFlags {
  std::string root = "runs";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string allow_origin;
  std::string ui;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Pipeline config JSON (defaults to <out>/config.json)");
  cmd->add_option("--out", f.out, "Run output directory (overrides config \"out\")");
  cmd->add_option("--seed", f.seed, "Seed passed to every model without its own (default 0)");
  cmd->add_option("--workers", f.workers, "Cap on parallel workers")->check(CLI::PositiveNumber);
  cmd->add_option("--model", f.models, "Restrict to these candidate model ids (repeatable)");
  cmd->add_option("--count", f.count, "Tasks to generate per server")->check(CLI::PositiveNumber);
  cmd->add_option("--max-attempts", f.max_attempts, "Verification attempt budget")->check(CLI::PositiveNumber);
  cmd->add_option("--judge-attempts", f.judge_attempts, "Judge attempts per record")->check(CLI::PositiveNumber);
  cmd->add_flag("--force", f.force, "Re-judge records that already have a verdict");
}

pipeline::PipelineConfig resolve_config(const CommonFlags& f) {
  fs::path file = f.config;
  if (file.empty()) {
    if (f.out.empty()) throw UsageError("--config is required (or --out pointing at an existing run)");
    file = fs::path(f.out) / "config.json";
  }
  if (!fs::exists(file)) throw UsageError("config file " + file.string() + " does not exist");
  json doc;
  try {
    doc = storage::read_json(file);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
  // Precedence: flags > config > defaults.
  if (!f.out.empty()) doc["out"] = f.out;
  if (f.seed) doc["seed"] = *f.seed;
  if (f.workers) doc["workers"] = *f.workers;
  if (f.count) doc["generation"]["count"] = *f.count;
  if (f.max_attempts) doc["verify"]["max_attempts"] = *f.max_attempts;
  if (f.judge_attempts) doc["judge"]["attempts"] = *f.judge_attempts;
  if (!f.models.empty() && doc.contains("candidates") && doc["candidates"].is_array()) {
    json kept = json::array();
    for (const auto& id : f.models) {
      bool found = false;
      for (const auto& m : doc["candidates"]) {
        if (m.value("model_id", std::string()) == id) {
          kept.push_back(m);
          found = true;
        }
      }
      if (!found) throw UsageError("--model " + id + " is not a configured candidate");
    }
    doc["candidates"] = kept;
  }
  try {
    return pipeline::PipelineConfig::from_json(doc);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
}

service::Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evaluation harness for tool-using LLM agents over MCP", "mcpeval"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::optional<pipeline::Stage> stage;
  bool all = false;
  struct StageCmd {
    const char* name;
    std::optional<pipeline::Stage> stage;
    const char* help;
  };
  const StageCmd stage_cmds[] = {
      {"generate", pipeline::Stage::generate, "Generate tasks from each server's tool list"},
      {"verify", pipeline::Stage::verify, "Verify tasks with the frontier model and record ground truth"},
      {"evaluate", pipeline::Stage::evaluate, "Run every candidate model over the verified tasks"},
      {"analyze", pipeline::Stage::analyze, "Score candidate tool calls against ground truth"},
      {"judge", pipeline::Stage::judge, "Score trajectories and final answers with the judge model"},
      {"report", pipeline::Stage::report, "Aggregate scores into report.json and report.md"},
      {"run-all", std::nullopt, "Run every stage in order"},
  };
  for (const auto& c : stage_cmds) {
    auto* cmd = app.add_subcommand(c.name, c.help);
    add_common(cmd, flags);
    cmd->callback([&stage, &all, s = c.stage] {
      stage = s;
      all = !s;
    });
  }

  ServeFlags sf;
  bool serve = false;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the run directory over HTTP");
  serve_cmd->add_option("--root", sf.root, "Directory holding runs");
  serve_cmd->add_option("--host", sf.host, "Bind address");
  serve_cmd->add_option("--port", sf.port, "Port (0 = ephemeral)");
  serve_cmd->add_option("--allow-origin", sf.allow_origin, "CORS origin allowed to call the API");
  serve_cmd->add_option("--ui", sf.ui, "Static dashboard directory served under /ui");
  serve_cmd->callback([&] { serve = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (serve) {
      fs::create_directories(sf.root);
      service::Service svc({sf.root, sf.host, sf.port, sf.allow_origin, sf.ui});
      int port = svc.bind();
      out << "serving " << sf.root << " on http://" << sf.host << ":" << port << std::endl;
      g_service = &svc;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      svc.listen();
      g_service = nullptr;
      return kExitOk;
    }

    auto config = resolve_config(flags);
    pipeline::RunLock lock(config.out);
    pipeline::Pipeline p(std::move(config), {.force_rejudge = flags.force});
    if (all) p.run_all();
    else p.run_stage(*stage);
    if (all || stage == pipeline::Stage::report) out << "report: " << (p.out_dir() / "report.md").string() << "\n";
    else out << pipeline::to_string(*stage) << ": done (" << p.out_dir().string() << ")\n";
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    events::emit("cli", "error", {{"error", e.what()}});
    err << "error: " << e.what() << "\n";
    return kExitStageFailure;
  }
}

}  // namespace mcpeval::cli
