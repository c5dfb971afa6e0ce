#include "mcpeval/fixtures.hpp"

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "mcpeval/error.hpp"
#include "mcpeval/hash.hpp"

#ifndef MCPEVAL_SOURCE_FIXTURE_DIR
#define MCPEVAL_SOURCE_FIXTURE_DIR ""
#endif
#ifndef MCPEVAL_BUILD_FIXTURE_SERVER
#define MCPEVAL_BUILD_FIXTURE_SERVER ""
#endif

namespace mcpeval::fixtures {
namespace {

struct FixtureTool {
  json spec;  // MCP tool descriptor
};

json text_content(const std::string& text) { return json::array({{{"type", "text"}, {"text", text}}}); }

json tool_result(const std::string& text, bool is_error = false) {
  return {{"content", text_content(text)}, {"isError", is_error}};
}

json rpc_result(const json& id, json result) { return {{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}}; }

json rpc_error(const json& id, int code, const std::string& message) {
  return {{"jsonrpc", "2.0"}, {"id", id}, {"error", {{"code", code}, {"message", message}}}};
}

json string_param(const std::string& description) { return {{"type", "string"}, {"description", description}}; }

json schema(json properties, std::vector<std::string> required) {
  return {{"type", "object"}, {"properties", std::move(properties)}, {"required", std::move(required)}};
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

unsigned seed_of(const std::string& s) {
  unsigned h = 0;
  for (unsigned char c : lower(s)) h = h * 31 + c;
  return h;
}

/// Common JSON-RPC plumbing; subclasses provide tools and their behaviour.
class BasicFixture : public FixtureServer {
 public:
  BasicFixture(std::string name, std::string server_name) : name_(std::move(name)), server_name_(std::move(server_name)) {}

  const std::string& name() const override { return name_; }

  std::optional<json> handle(const json& message) override {
    if (!message.is_object() || !message.contains("method")) return std::nullopt;
    const std::string method = message["method"].get<std::string>();
    if (!message.contains("id")) return std::nullopt;  // notification
    const json& id = message["id"];
    const json params = message.value("params", json::object());

    if (method == "initialize") {
      return rpc_result(id, {{"protocolVersion", protocol_version()},
                             {"capabilities", {{"tools", {{"listChanged", false}}}}},
                             {"serverInfo", {{"name", server_name_}, {"version", "1.0.0"}}}});
    }
    if (method == "ping") return rpc_result(id, json::object());
    if (method == "tools/list") return rpc_result(id, list_page(params));
    if (method == "tools/call") {
      const std::string tool = params.value("name", std::string());
      const json args = params.value("arguments", json::object());
      if (!has_tool(tool)) return rpc_error(id, -32602, "unknown tool: " + tool);
      ++ordinal_;
      return rpc_result(id, call(tool, args));
    }
    return rpc_error(id, -32601, "method not found: " + method);
  }

 protected:
  virtual std::string protocol_version() const { return "2025-03-26"; }
  virtual std::vector<FixtureTool> tools() const = 0;
  virtual json call(const std::string& tool, const json& args) = 0;
  virtual std::size_t page_size() const { return 0; }  // 0 = no paging

  /// 1-based count of tools/call requests handled by this instance.
  std::size_t ordinal() const { return ordinal_; }

  static std::optional<std::string> missing_required(const json& args, const json& tool_schema) {
    for (const auto& r : tool_schema.value("required", json::array())) {
      if (!args.contains(r.get<std::string>())) return r.get<std::string>();
    }
    return std::nullopt;
  }

  json schema_of(const std::string& tool) const {
    for (const auto& t : tools()) {
      if (t.spec.value("name", "") == tool) return t.spec.value("inputSchema", json::object());
    }
    return json::object();
  }

 private:
  bool has_tool(const std::string& tool) const {
    auto all = tools();
    return std::any_of(all.begin(), all.end(), [&](const FixtureTool& t) { return t.spec.value("name", "") == tool; });
  }

  json list_page(const json& params) const {
    auto all = tools();
    json listed = json::array();
    std::size_t start = 0;
    if (params.contains("cursor")) start = std::stoul(params["cursor"].get<std::string>());
    std::size_t end = page_size() == 0 ? all.size() : std::min(all.size(), start + page_size());
    for (std::size_t i = start; i < end; ++i) listed.push_back(all[i].spec);
    json result = {{"tools", listed}};
    if (end < all.size()) result["nextCursor"] = std::to_string(end);
    return result;
  }

  std::string name_;
  std::string server_name_;
  std::size_t ordinal_ = 0;
};

class EchoFixture final : public BasicFixture {
 public:
  EchoFixture() : BasicFixture("echo", "fixture-echo") {}

 protected:
  std::vector<FixtureTool> tools() const override {
    return {
        {{{"name", "echo"}, {"description", "Returns the given message unchanged."},
          {"inputSchema", schema({{"msg", string_param("Message to echo")}}, {"msg"})}}},
        {{{"name", "fail"}, {"description", "Always reports a tool-level error."},
          {"inputSchema", schema({{"msg", string_param("Optional error detail")}}, {})}}},
        {{{"name", "slow"}, {"description", "Sleeps for the given number of milliseconds."},
          {"inputSchema", schema({{"ms", {{"type", "integer"}, {"description", "Delay in ms"}}}}, {"ms"})}}},
    };
  }

  json call(const std::string& tool, const json& args) override {
    if (tool == "echo") {
      if (!args.contains("msg")) return tool_result("missing required parameter: msg", true);
      const auto& msg = args["msg"];
      return tool_result(msg.is_string() ? msg.get<std::string>() : msg.dump());
    }
    if (tool == "fail") {
      return tool_result("fixture failure: " + args.value("msg", std::string("requested failure")), true);
    }
    // slow
    auto ms = args.value("ms", 0);
    std::this_thread::sleep_for(std::chrono::milliseconds(std::max(0, ms)));
    return tool_result("slept " + std::to_string(ms) + " ms");
  }
};

class WeatherFixture final : public BasicFixture {
 public:
  WeatherFixture() : BasicFixture("weather", "fixture-weather") {}

 protected:
  // One tool per page so clients must follow nextCursor.
  std::size_t page_size() const override { return 1; }

  std::vector<FixtureTool> tools() const override {
    return {
        {{{"name", "get_forecast"},
          {"description", "Daily weather forecast for a city."},
          {"inputSchema",
           schema({{"city", string_param("City name, e.g. Paris")},
                   {"days", {{"type", "integer"}, {"minimum", 1}, {"maximum", 7}, {"description", "Number of days (default 3)"}}}},
                  {"city"})}}},
        {{{"name", "get_alerts"},
          {"description", "Active weather alerts for a US state."},
          {"inputSchema", schema({{"state", string_param("Two-letter US state code, e.g. CA")}}, {"state"})}}},
    };
  }

  json call(const std::string& tool, const json& args) override {
    if (auto missing = missing_required(args, schema_of(tool))) {
      return tool_result("missing required parameter: " + *missing, true);
    }
    if (tool == "get_forecast") {
      if (!args["city"].is_string() || args["city"].get<std::string>().empty()) {
        return tool_result("invalid parameter: city must be a non-empty string", true);
      }
      const std::string city = args["city"].get<std::string>();
      int days = 3;
      if (args.contains("days")) {
        if (!args["days"].is_number_integer()) return tool_result("invalid parameter: days must be an integer", true);
        days = args["days"].get<int>();
        if (days < 1 || days > 7) return tool_result("invalid parameter: days must be between 1 and 7", true);
      }
      static const char* kConditions[] = {"sunny", "cloudy", "rain", "windy", "snow"};
      const unsigned seed = seed_of(city);
      json forecast = json::array();
      for (int d = 1; d <= days; ++d) {
        int high = 10 + static_cast<int>((seed + 7u * d) % 20u);
        int low = high - 5 - static_cast<int>((seed + d) % 5u);
        forecast.push_back({{"day", d}, {"high_c", high}, {"low_c", low}, {"conditions", kConditions[(seed + d) % 5u]}});
      }
      return tool_result(json{{"city", city}, {"days", days}, {"forecast", forecast}}.dump());
    }
    // get_alerts
    if (!args["state"].is_string()) return tool_result("invalid parameter: state must be a string", true);
    const std::string state = args["state"].get<std::string>();
    if (state.size() != 2) return tool_result("invalid parameter: state must be a two-letter code", true);
    json alerts = json::array();
    if (seed_of(state) % 2 == 0) {
      alerts.push_back({{"event", "Heat Advisory"}, {"severity", "moderate"}});
    }
    return tool_result(json{{"state", state}, {"alerts", alerts}}.dump());
  }
};

class EmptyFixture final : public BasicFixture {
 public:
  EmptyFixture() : BasicFixture("empty", "fixture-empty") {}

 protected:
  std::vector<FixtureTool> tools() const override { return {}; }
  json call(const std::string&, const json&) override { return tool_result("no tools", true); }
};

/// Fails the first tools/call it receives, succeeds afterwards.
class FlakyFixture final : public BasicFixture {
 public:
  FlakyFixture() : BasicFixture("flaky", "fixture-flaky") {}

 protected:
  std::vector<FixtureTool> tools() const override {
    return {{{{"name", "fetch_quote"},
              {"description", "Latest price for a ticker symbol."},
              {"inputSchema", schema({{"symbol", string_param("Ticker symbol, e.g. ACME")}}, {"symbol"})}}}};
  }

  json call(const std::string& tool, const json& args) override {
    if (ordinal() == 1) return tool_result("upstream unavailable (injected failure on first call)", true);
    if (auto missing = missing_required(args, schema_of(tool))) {
      return tool_result("missing required parameter: " + *missing, true);
    }
    const std::string symbol = args["symbol"].is_string() ? args["symbol"].get<std::string>() : args["symbol"].dump();
    const unsigned seed = seed_of(symbol);
    return tool_result(json{{"symbol", symbol}, {"price", 100 + static_cast<int>(seed % 900u)}, {"currency", "USD"}}.dump());
  }
};

/// Advertises a tool entry without a name.
class MalformedFixture final : public BasicFixture {
 public:
  MalformedFixture() : BasicFixture("malformed", "fixture-malformed") {}

 protected:
  std::vector<FixtureTool> tools() const override {
    return {{{{"description", "a tool with no name"}, {"inputSchema", schema(json::object(), {})}}}};
  }
  json call(const std::string&, const json&) override { return tool_result("unreachable", true); }
};

/// Never answers, used for handshake timeouts.
class SilentFixture final : public FixtureServer {
 public:
  std::optional<json> handle(const json&) override { return std::nullopt; }
  const std::string& name() const override { return name_; }

 private:
  std::string name_ = "silent";
};

/// Answers initialize with a protocol revision the client does not speak.
class LegacyFixture final : public BasicFixture {
 public:
  LegacyFixture() : BasicFixture("legacy", "fixture-legacy") {}

 protected:
  std::string protocol_version() const override { return "2023-01-01"; }
  std::vector<FixtureTool> tools() const override { return {}; }
  json call(const std::string&, const json&) override { return tool_result("unreachable", true); }
};

std::filesystem::path self_exe_dir() {
  std::error_code ec;
  auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
  return ec ? std::filesystem::path() : p.parent_path();
}

json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ParseError("cannot open " + p.string());
  auto doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ParseError(p.string() + " is not valid JSON");
  return doc;
}

}  // namespace

std::vector<std::string> server_fixture_names() {
  return {"echo", "empty", "flaky", "legacy", "malformed", "silent", "weather"};
}

std::unique_ptr<FixtureServer> FixtureServer::create(const std::string& name) {
  if (name == "echo") return std::make_unique<EchoFixture>();
  if (name == "weather") return std::make_unique<WeatherFixture>();
  if (name == "empty") return std::make_unique<EmptyFixture>();
  if (name == "flaky") return std::make_unique<FlakyFixture>();
  if (name == "malformed") return std::make_unique<MalformedFixture>();
  if (name == "silent") return std::make_unique<SilentFixture>();
  if (name == "legacy") return std::make_unique<LegacyFixture>();
  throw PreconditionError("unknown fixture '" + name + "'");
}

int run_stdio_server(const std::string& name, std::istream& in, std::ostream& out) {
  auto server = FixtureServer::create(name);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto msg = json::parse(line, nullptr, false);
    if (msg.is_discarded()) {
      out << rpc_error(nullptr, -32700, "parse error").dump() << '\n' << std::flush;
      continue;
    }
    if (auto reply = server->handle(msg)) out << reply->dump() << '\n' << std::flush;
  }
  return 0;
}

std::filesystem::path fixture_dir() {
  if (const char* env = std::getenv("MCP_EVAL_FIXTURE_DIR"); env && *env) return env;
  return MCPEVAL_SOURCE_FIXTURE_DIR;
}

std::string fixture_server_program() {
  if (const char* env = std::getenv("MCP_EVAL_FIXTURE_SERVER"); env && *env) return env;
  std::error_code ec;
  if (std::filesystem::path built = MCPEVAL_BUILD_FIXTURE_SERVER; !built.empty() && std::filesystem::exists(built, ec)) {
    return built.string();
  }
  if (auto dir = self_exe_dir(); !dir.empty()) {
    auto sibling = dir / "mcpeval-fixture-server";
    if (std::filesystem::exists(sibling, ec)) return sibling.string();
  }
  return "mcpeval-fixture-server";
}

protocol::ServerConfig launch_fixture(const std::string& name) {
  auto spec_path = fixture_dir() / "servers" / (name + ".json");
  std::error_code ec;
  if (name.empty() || name.find('/') != std::string::npos || !std::filesystem::exists(spec_path, ec)) {
    throw PreconditionError("unknown fixture '" + name + "'");
  }
  json spec = read_json_file(spec_path);
  protocol::ServerConfig cfg;
  cfg.id = spec.value("id", name);
  cfg.transport = protocol::TransportKind::stdio;
  cfg.command = fixture_server_program();
  cfg.args = {spec.value("fixture", name)};
  if (spec.contains("env")) cfg.env = spec["env"].get<std::map<std::string, std::string>>();
  if (spec.contains("connect_timeout_ms")) cfg.connect_timeout = protocol::Millis(spec["connect_timeout_ms"].get<std::int64_t>());
  if (spec.contains("call_timeout_ms")) cfg.call_timeout = protocol::Millis(spec["call_timeout_ms"].get<std::int64_t>());
  cfg.validate();
  return cfg;
}

std::filesystem::path scripted_model_path(const std::string& name) {
  std::error_code ec;
  std::filesystem::path direct(name);
  if (direct.has_extension() && std::filesystem::exists(direct, ec)) return direct;
  return fixture_dir() / "models" / (name + ".json");
}

FixtureCatalog FixtureCatalog::load(const std::filesystem::path& root, const std::filesystem::path& golden_dir) {
  FixtureCatalog catalog;
  std::error_code ec;
  auto sorted_json_files = [&](const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(dir, ec)) {
      for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    return files;
  };
  for (const auto& f : sorted_json_files(root / "servers")) {
    json spec = read_json_file(f);
    protocol::ServerConfig cfg;
    cfg.id = spec.value("id", f.stem().string());
    cfg.command = fixture_server_program();
    cfg.args = {spec.value("fixture", f.stem().string())};
    catalog.servers.emplace(f.stem().string(), std::move(cfg));
  }
  for (const auto& f : sorted_json_files(root / "models")) {
    catalog.model_scripts.emplace(f.stem().string(), read_json_file(f));
  }
  auto manifest_path = golden_dir / "MANIFEST.json";
  if (std::filesystem::exists(manifest_path, ec)) {
    json manifest = read_json_file(manifest_path);
    for (auto& [name, entry] : manifest.items()) {
      catalog.golden.emplace(name, GoldenFile{golden_dir / entry.at("path").get<std::string>(),
                                              entry.at("sha256").get<std::string>()});
    }
  }
  return catalog;
}

std::vector<std::string> FixtureCatalog::stale_golden_files() const {
  std::vector<std::string> stale;
  for (const auto& [name, file] : golden) {
    std::ifstream in(file.path, std::ios::binary);
    if (!in.is_open()) {
      stale.push_back(name);
      continue;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (sha256_hex(buf.str()) != file.sha256) stale.push_back(name);
  }
  return stale;
}

}  // namespace mcpeval::fixtures
