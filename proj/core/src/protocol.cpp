#include "mcpeval/protocol.hpp"

#include <fstream>
#include <set>

#include "channel.hpp"
#include "mcpeval/error.hpp"
#include "mcpeval/events.hpp"

namespace mcpeval::protocol {

bool is_supported_protocol_version(const std::string& version) {
  static const std::set<std::string> kSupported = {"2024-11-05", "2025-03-26", "2025-06-18"};
  return kSupported.contains(version);
}

void ServerConfig::validate() const {
  if (id.empty()) throw PreconditionError("server config: id must be non-empty");
  const bool has_command = !command.empty();
  const bool has_url = !url.empty();
  if (has_command && has_url) {
    throw PreconditionError("server '" + id + "': exactly one of command and url may be set");
  }
  if (transport == TransportKind::stdio && !has_command) {
    throw PreconditionError("server '" + id + "': stdio transport requires a command");
  }
  if (transport == TransportKind::http) {
    if (!has_url) throw PreconditionError("server '" + id + "': http transport requires a url");
    if (url.rfind("http://", 0) != 0 && url.rfind("https://", 0) != 0) {
      throw PreconditionError("server '" + id + "': url '" + url + "' is not an http(s) url");
    }
  }
  if (connect_timeout.count() <= 0 || call_timeout.count() <= 0) {
    throw PreconditionError("server '" + id + "': timeouts must be positive");
  }
}

void to_json(json& j, const ServerConfig& c) {
  j = json{{"id", c.id}, {"transport", c.transport == TransportKind::stdio ? "stdio" : "http"}};
  if (!c.command.empty()) {
    j["command"] = c.command;
    j["args"] = c.args;
  }
  if (!c.url.empty()) j["url"] = c.url;
  if (!c.env.empty()) j["env"] = c.env;
  if (!c.headers.empty()) j["headers"] = c.headers;
  j["connect_timeout_ms"] = c.connect_timeout.count();
  j["call_timeout_ms"] = c.call_timeout.count();
}

void from_json(const json& j, ServerConfig& c) {
  if (!j.is_object()) throw ParseError("server config must be an object");
  c = ServerConfig{};
  c.id = j.value("id", std::string());
  std::string transport = j.value("transport", std::string(j.contains("url") && !j.contains("command") ? "http" : "stdio"));
  if (transport == "stdio") {
    c.transport = TransportKind::stdio;
  } else if (transport == "http") {
    c.transport = TransportKind::http;
  } else {
    throw ParseError("server '" + c.id + "': unknown transport '" + transport + "'");
  }
  c.command = j.value("command", std::string());
  if (j.contains("args")) c.args = j.at("args").get<std::vector<std::string>>();
  c.url = j.value("url", std::string());
  if (j.contains("env")) c.env = j.at("env").get<std::map<std::string, std::string>>();
  if (j.contains("headers")) c.headers = j.at("headers").get<std::map<std::string, std::string>>();
  if (j.contains("connect_timeout_ms")) c.connect_timeout = Millis(j.at("connect_timeout_ms").get<std::int64_t>());
  if (j.contains("call_timeout_ms")) c.call_timeout = Millis(j.at("call_timeout_ms").get<std::int64_t>());
}

std::vector<ServerConfig> parse_server_configs(const json& doc) {
  if (!doc.is_object() || !doc.contains("servers") || !doc["servers"].is_array()) {
    throw ParseError("config: \"servers\" must be a list");
  }
  std::vector<ServerConfig> out;
  std::set<std::string> seen;
  for (const auto& entry : doc["servers"]) {
    auto cfg = entry.get<ServerConfig>();
    cfg.validate();
    if (!seen.insert(cfg.id).second) throw PreconditionError("config: duplicate server id '" + cfg.id + "'");
    out.push_back(std::move(cfg));
  }
  return out;
}

std::vector<ServerConfig> load_server_configs(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open server config " + file.string());
  auto doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ParseError("server config " + file.string() + " is not valid JSON");
  return parse_server_configs(doc);
}

void to_json(json& j, const ToolSpec& t) {
  j = json{{"name", t.name}, {"description", t.description}, {"input_schema", t.input_schema}};
}

void from_json(const json& j, ToolSpec& t) {
  t.name = j.at("name").get<std::string>();
  t.description = j.value("description", std::string());
  t.input_schema = j.contains("input_schema") ? j.at("input_schema") : j.value("inputSchema", json::object());
}

void to_json(json& j, const ToolCall& c) {
  j = json{{"tool_name", c.tool_name}, {"arguments", c.arguments}, {"call_id", c.call_id}};
}

void from_json(const json& j, ToolCall& c) {
  c.tool_name = j.at("tool_name").get<std::string>();
  c.arguments = j.value("arguments", json::object());
  c.call_id = j.value("call_id", std::string());
}

std::string ToolResult::text() const {
  std::string out;
  bool first = true;
  for (const auto& block : content) {
    if (!first) out.push_back('\n');
    first = false;
    if (block.is_object() && block.value("type", "") == "text" && block.contains("text")) {
      out += block["text"].get<std::string>();
    } else {
      out += block.dump();
    }
  }
  return out;
}

void to_json(json& j, const ToolResult& r) {
  j = json{{"call_id", r.call_id}, {"content", r.content}, {"is_error", r.is_error}};
}

void from_json(const json& j, ToolResult& r) {
  r.call_id = j.value("call_id", std::string());
  r.content = j.value("content", json::array());
  r.is_error = j.value("is_error", false);
}

ToolResult text_result(std::string call_id, std::string text, bool is_error) {
  return ToolResult{std::move(call_id), json::array({{{"type", "text"}, {"text", std::move(text)}}}), is_error};
}

std::vector<ToolSpec> parse_tool_page(const json& result, std::size_t base_index, const std::string& server_id) {
  if (!result.is_object() || !result.contains("tools") || !result["tools"].is_array()) {
    throw ParseError("[" + server_id + "] tools/list result has no \"tools\" array");
  }
  std::vector<ToolSpec> out;
  std::size_t index = base_index;
  for (const auto& entry : result["tools"]) {
    auto fail = [&](const std::string& why) {
      throw ParseError("[" + server_id + "] malformed tool at index " + std::to_string(index) + ": " + why);
    };
    if (!entry.is_object()) fail("not an object");
    if (!entry.contains("name") || !entry["name"].is_string() || entry["name"].get<std::string>().empty()) {
      fail("missing name");
    }
    if (!entry.contains("inputSchema") || !entry["inputSchema"].is_object()) fail("missing inputSchema object");
    ToolSpec spec;
    spec.name = entry["name"].get<std::string>();
    if (entry.contains("description") && entry["description"].is_string()) {
      spec.description = entry["description"].get<std::string>();
    }
    spec.input_schema = entry["inputSchema"];
    out.push_back(std::move(spec));
    ++index;
  }
  return out;
}

// --- Session ---------------------------------------------------------------

Session::Session(ServerConfig config, std::unique_ptr<detail::Channel> channel)
    : config_(std::move(config)), channel_(std::move(channel)) {}

Session::Session(Session&&) noexcept = default;
Session& Session::operator=(Session&&) noexcept = default;

Session::~Session() { close(); }

bool Session::is_open() const noexcept { return channel_ && channel_->is_open(); }

void Session::close() noexcept {
  if (channel_) channel_->close();
}

Session Session::connect(const ServerConfig& config) {
  config.validate();
  auto channel = config.transport == TransportKind::stdio ? detail::open_stdio_channel(config)
                                                          : detail::open_http_channel(config);
  Session session(config, std::move(channel));

  json init_params = {
      {"protocolVersion", kClientProtocolVersion},
      {"capabilities", json::object()},
      {"clientInfo", {{"name", "mcpeval"}, {"version", "0.1.0"}}},
  };
  json result;
  try {
    result = session.request("initialize", std::move(init_params), config.connect_timeout);
  } catch (const CallTimeoutError&) {
    throw HandshakeTimeoutError(config.id, "initialize handshake timed out after " +
                                               std::to_string(config.connect_timeout.count()) + " ms");
  } catch (const TransportError& e) {
    throw ConnectError(config.id, std::string("handshake failed: ") + e.what());
  }

  std::string version = result.value("protocolVersion", std::string());
  if (!is_supported_protocol_version(version)) {
    throw ProtocolVersionError(config.id, "server speaks unsupported protocol version '" + version + "'");
  }
  session.info_.protocol_version = version;
  if (result.contains("serverInfo") && result["serverInfo"].is_object()) {
    session.info_.name = result["serverInfo"].value("name", std::string());
    session.info_.version = result["serverInfo"].value("version", std::string());
  }
  session.channel_->notify({{"jsonrpc", "2.0"}, {"method", "notifications/initialized"}});
  events::emit("protocol", "connected",
               {{"server", config.id}, {"server_name", session.info_.name}, {"protocol", version}});
  return session;
}

json Session::request(const std::string& method, json params, Millis timeout) {
  if (!is_open()) throw TransportError(config_.id, "session is closed");
  const std::int64_t id = next_id_++;
  json msg = {{"jsonrpc", "2.0"}, {"id", id}, {"method", method}, {"params", std::move(params)}};
  json response = channel_->round_trip(msg, detail::Clock::now() + timeout);
  if (response.contains("error")) {
    const auto& err = response["error"];
    std::string message = err.is_object() ? err.value("message", std::string("unknown error")) : err.dump();
    int code = err.is_object() ? err.value("code", 0) : 0;
    // Callers decide whether a JSON-RPC error is fatal; tools/call maps it to is_error.
    throw RpcError(config_.id, code, method + " failed: " + message);
  }
  if (!response.contains("result")) throw TransportError(config_.id, method + " response has no result");
  return response["result"];
}

std::vector<ToolSpec> Session::list_tools() {
  std::vector<ToolSpec> tools;
  std::set<std::string> names;
  json params = json::object();
  for (int page = 0; page < 10'000; ++page) {
    json result = request("tools/list", params, config_.call_timeout);
    auto specs = parse_tool_page(result, tools.size(), config_.id);
    for (auto& spec : specs) {
      if (!names.insert(spec.name).second) {
        throw ParseError("[" + config_.id + "] duplicate tool name '" + spec.name + "' at index " +
                         std::to_string(tools.size()));
      }
      tools.push_back(std::move(spec));
    }
    if (!result.contains("nextCursor") || result["nextCursor"].is_null()) return tools;
    params["cursor"] = result["nextCursor"];
  }
  throw TransportError(config_.id, "tools/list pagination did not terminate");
}

ToolResult Session::call_tool(const ToolCall& call) {
  if (call.tool_name.empty()) throw PreconditionError("call_tool: tool_name must be non-empty");
  json args = call.arguments.is_null() ? json::object() : call.arguments;
  if (!args.is_object()) throw PreconditionError("call_tool: arguments must be an object");

  json result;
  try {
    result = request("tools/call", {{"name", call.tool_name}, {"arguments", args}}, config_.call_timeout);
  } catch (const RpcError& e) {
    // JSON-RPC level error (unknown tool, invalid params): the server is
    // still alive, so surface it as a tool-level failure.
    return text_result(call.call_id, e.what(), true);
  }
  ToolResult out;
  out.call_id = call.call_id;
  out.content = result.contains("content") && result["content"].is_array() ? result["content"] : json::array();
  if (result.contains("structuredContent") && out.content.empty()) {
    out.content.push_back({{"type", "text"}, {"text", result["structuredContent"].dump()}});
  }
  out.is_error = result.value("isError", false);
  return out;
}

}  // namespace mcpeval::protocol
