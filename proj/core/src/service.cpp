#include "mcpeval/service.hpp"

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <list>
#include <mutex>
#include <regex>
#include <thread>

#include "mcpeval/error.hpp"
#include "mcpeval/events.hpp"
#include "mcpeval/executor.hpp"
#include "mcpeval/hash.hpp"
#include "mcpeval/pipeline.hpp"
#include "mcpeval/storage.hpp"

namespace mcpeval::service {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

bool valid_id(const std::string& id) {
  static const std::regex pattern("[A-Za-z0-9._-]+");
  return id != "." && id != ".." && std::regex_match(id, pattern);
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& field = "") {
  json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  send_json(res, status, body);
}

/// First quoted config key named in a parse message, e.g. "servers".
std::string field_of(const std::string& message) {
  auto open = message.find('"');
  if (open == std::string::npos) return "";
  auto close = message.find('"', open + 1);
  return close == std::string::npos ? "" : message.substr(open + 1, close - open - 1);
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  httplib::Server server;
  int bound_port = -1;

  std::mutex jobs_mu;
  std::condition_variable jobs_cv;
  std::list<std::thread> jobs;
  std::size_t active = 0;
  std::mutex start_mu;  // serializes lock acquisition between request handlers

  fs::path run_dir(const std::string& id) const { return options.root / id; }

  bool run_exists(const std::string& id) const {
    return valid_id(id) && fs::exists(run_dir(id) / "status.json");
  }

  void launch(pipeline::PipelineConfig config, std::optional<pipeline::Stage> stage) {
    // Take the lock before replying so a second request sees it.
    std::unique_lock start_lock(start_mu);
    auto lock = std::make_shared<pipeline::RunLock>(config.out);
    start_lock.unlock();
    std::lock_guard lk(jobs_mu);
    ++active;
    jobs.emplace_back([this, config = std::move(config), stage, lock]() mutable {
      try {
        pipeline::Pipeline p(std::move(config));
        if (stage) p.run_stage(*stage);
        else p.run_all();
      } catch (const std::exception& e) {
        events::emit("service", "job_failed", {{"error", e.what()}});
      }
      lock.reset();
      std::lock_guard done(jobs_mu);
      --active;
      jobs_cv.notify_all();
    });
  }

  void routes() {
    if (!options.allow_origin.empty()) {
      server.set_default_headers({{"Access-Control-Allow-Origin", options.allow_origin},
                                  {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                  {"Access-Control-Allow-Headers", "Content-Type"}});
      server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    }
    if (!options.ui_dir.empty() && fs::is_directory(options.ui_dir)) {
      server.set_mount_point("/ui", options.ui_dir.string());
    }

    server.Get("/api/runs", [this](const httplib::Request&, httplib::Response& res) {
      json runs = json::array();
      std::vector<fs::path> dirs;
      for (const auto& e : fs::directory_iterator(options.root))
        if (e.is_directory() && fs::exists(e.path() / "status.json")) dirs.push_back(e.path());
      std::sort(dirs.begin(), dirs.end());
      for (const auto& d : dirs) {
        try {
          runs.push_back(pipeline::read_status(d));
        } catch (const Error&) {
          // status mid-rename or corrupt; skip rather than fail the listing
        }
      }
      send_json(res, 200, runs);
    });

    server.Get(R"(/api/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto id = req.matches[1].str();
      if (!run_exists(id)) return send_error(res, 404, "unknown run " + id);
      auto st = pipeline::read_status(run_dir(id));
      st["active"] = pipeline::RunLock::is_locked(run_dir(id));
      if (fs::exists(run_dir(id) / "config.json")) {
        json models = json::array();
        for (const auto& m : storage::read_json(run_dir(id) / "config.json").value("candidates", json::array()))
          models.push_back(m.value("model_id", std::string()));
        st["models"] = models;
      }
      send_json(res, 200, st);
    });

    server.Get(R"(/api/runs/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
      auto id = req.matches[1].str();
      if (!run_exists(id)) return send_error(res, 404, "unknown run " + id);
      auto path = run_dir(id) / "report.json";
      if (!fs::exists(path)) return send_error(res, 404, "run " + id + " has no report yet");
      res.status = 200;
      res.set_content(storage::read_text(path), "application/json");
    });

    server.Get(R"(/api/runs/([^/]+)/records)", [this](const httplib::Request& req, httplib::Response& res) {
      auto id = req.matches[1].str();
      if (!run_exists(id)) return send_error(res, 404, "unknown run " + id);
      if (!req.has_param("model")) return send_error(res, 400, "query parameter \"model\" is required", "model");
      auto model = req.get_param_value("model");
      auto dir = run_dir(id);
      auto index = dir / executor::records_file(model);
      if (!fs::exists(index)) return send_error(res, 404, "no records for model " + model);

      std::map<std::string, json> matches, judged;
      for (auto& l : storage::read_jsonl(dir / pipeline::match_file(model)))
        matches[l.value("task_id", std::string())] = l.value("match", json());
      for (auto& l : storage::read_jsonl(dir / pipeline::judge_summary_file(model)))
        judged[l.value("task_id", std::string())] = l;
      json out = json::array();
      for (auto& line : storage::read_jsonl(index)) {
        auto task_id = line.value("task_id", std::string());
        line["match"] = matches.contains(task_id) ? matches[task_id] : json(nullptr);
        line["judge"] = nullptr;
        if (auto it = judged.find(task_id); it != judged.end() && !it->second.contains("error")) {
          auto file = dir / it->second.value("judgment", std::string());
          if (fs::exists(file)) line["judge"] = storage::read_json(file);
        }
        out.push_back(std::move(line));
      }
      send_json(res, 200, out);
    });

    server.Get(R"(/api/runs/([^/]+)/trajectories/([^/]+)/([^/]+))",
               [this](const httplib::Request& req, httplib::Response& res) {
                 auto id = req.matches[1].str();
                 if (!run_exists(id)) return send_error(res, 404, "unknown run " + id);
                 auto file = run_dir(id) / executor::candidate_trajectory_file(req.matches[2].str(), req.matches[3].str());
                 if (!fs::exists(file)) return send_error(res, 404, "no such trajectory");
                 res.status = 200;
                 res.set_content(storage::read_text(file), "application/json");
               });

    server.Post("/api/runs", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "body must be a JSON object");
      json doc = body.contains("config") && body["config"].is_object() ? body["config"] : body;
      std::string run_id = body.value("run_id", std::string());
      if (run_id.empty()) {
        run_id = "run-" + sha256_hex(doc.dump() + storage::utc_now_iso()).substr(0, 12);
      }
      if (!valid_id(run_id)) return send_error(res, 400, "run_id may only contain [A-Za-z0-9._-]", "run_id");
      if (fs::exists(run_dir(run_id))) return send_error(res, 409, "run " + run_id + " already exists", "run_id");
      pipeline::PipelineConfig config;
      try {
        config = pipeline::PipelineConfig::from_json(doc);
      } catch (const std::exception& e) {
        return send_error(res, 400, e.what(), field_of(e.what()));
      }
      config.out = run_dir(run_id);
      try {
        pipeline::init_run(config.out, config);
        launch(std::move(config), std::nullopt);
      } catch (const Error& e) {
        return send_error(res, 409, e.what());
      }
      send_json(res, 202, {{"run_id", run_id}});
    });

    server.Post(R"(/api/runs/([^/]+)/stages/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto id = req.matches[1].str();
      if (!run_exists(id)) return send_error(res, 404, "unknown run " + id);
      auto stage = pipeline::stage_from_string(req.matches[2].str());
      if (!stage) return send_error(res, 400, "unknown stage " + req.matches[2].str(), "stage");
      pipeline::PipelineConfig config;
      try {
        config = pipeline::PipelineConfig::from_json(storage::read_json(run_dir(id) / "config.json"));
      } catch (const std::exception& e) {
        return send_error(res, 500, std::string("stored config is unusable: ") + e.what());
      }
      config.out = run_dir(id);
      try {
        launch(std::move(config), *stage);
      } catch (const PreconditionError& e) {
        return send_error(res, 409, e.what());
      }
      send_json(res, 202, {{"run_id", id}, {"stage", pipeline::to_string(*stage)}});
    });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send_error(res, 500, what);
    });
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  if (!fs::is_directory(options.root)) {
    throw PreconditionError("service root " + options.root.string() + " is not a directory");
  }
  impl_->options = std::move(options);
  impl_->routes();
}

Service::~Service() { stop(); }

int Service::bind() {
  if (impl_->bound_port >= 0) return impl_->bound_port;
  const auto& o = impl_->options;
  int port = o.port == 0 ? impl_->server.bind_to_any_port(o.host) : (impl_->server.bind_to_port(o.host, o.port) ? o.port : -1);
  if (port < 0) throw Error("cannot bind " + o.host + ":" + std::to_string(o.port));
  impl_->bound_port = port;
  events::emit("service", "listening", {{"host", o.host}, {"port", port}});
  return port;
}

void Service::listen() {
  bind();
  impl_->server.listen_after_bind();
}

void Service::wait_idle() {
  std::unique_lock lk(impl_->jobs_mu);
  impl_->jobs_cv.wait(lk, [&] { return impl_->active == 0; });
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  wait_idle();
  std::list<std::thread> jobs;
  {
    std::lock_guard lk(impl_->jobs_mu);
    jobs.swap(impl_->jobs);
  }
  for (auto& t : jobs)
    if (t.joinable()) t.join();
}

}  // namespace mcpeval::service
