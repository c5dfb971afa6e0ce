#include "mcpeval/gateway.hpp"

#include <fstream>
#include <map>
#include <mutex>

#include "mcpeval/error.hpp"
#include "mcpeval/fixtures.hpp"

namespace mcpeval::gateway {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::tool: return "tool";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  if (s == "tool") return Role::tool;
  throw ParseError("unknown chat role '" + std::string(s) + "'");
}

ChatMessage ChatMessage::system(std::string text) { return {Role::system, std::move(text), {}, {}}; }
ChatMessage ChatMessage::user(std::string text) { return {Role::user, std::move(text), {}, {}}; }
ChatMessage ChatMessage::assistant(std::string text, std::vector<ToolCall> calls) {
  return {Role::assistant, std::move(text), std::move(calls), {}};
}
ChatMessage ChatMessage::tool(std::string call_id, std::string text) {
  return {Role::tool, std::move(text), {}, std::move(call_id)};
}

void ChatMessage::validate() const {
  if (!tool_calls.empty() && role != Role::assistant) {
    throw PreconditionError("chat message: only assistant messages may carry tool calls");
  }
  if ((role == Role::tool) != !tool_result_for.empty()) {
    throw PreconditionError("chat message: tool_result_for must be set exactly on tool messages");
  }
}

void to_json(json& j, const ChatMessage& m) {
  j = json{{"role", to_string(m.role)}, {"text", m.text}};
  if (!m.tool_calls.empty()) j["tool_calls"] = m.tool_calls;
  if (!m.tool_result_for.empty()) j["tool_result_for"] = m.tool_result_for;
}

void from_json(const json& j, ChatMessage& m) {
  m.role = role_from_string(j.at("role").get<std::string>());
  m.text = j.value("text", std::string());
  m.tool_calls = j.value("tool_calls", std::vector<ToolCall>{});
  m.tool_result_for = j.value("tool_result_for", std::string());
}

void ModelConfig::validate() const {
  if (model_id.empty()) throw PreconditionError("model config: model_id must be non-empty");
  if (endpoint.empty()) throw PreconditionError("model '" + model_id + "': endpoint must be set");
  if (max_turns < 1) throw PreconditionError("model '" + model_id + "': max_turns must be >= 1");
  if (temperature && (*temperature < 0.0 || *temperature > 2.0)) {
    throw PreconditionError("model '" + model_id + "': temperature must be in [0, 2]");
  }
  if (retry_budget < 0) throw PreconditionError("model '" + model_id + "': retry_budget must be >= 0");
}

bool ModelConfig::is_scripted() const { return endpoint.rfind("scripted:", 0) == 0; }

std::string ModelConfig::script_name() const { return is_scripted() ? endpoint.substr(9) : std::string(); }

void to_json(json& j, const ModelConfig& c) {
  j = json{{"model_id", c.model_id}, {"endpoint", c.endpoint}, {"max_turns", c.max_turns}};
  j["temperature"] = c.temperature ? json(*c.temperature) : json("default");
  if (!c.api_key_env.empty()) j["api_key_env"] = c.api_key_env;
  j["retry_budget"] = c.retry_budget;
  if (c.seed) j["seed"] = *c.seed;
}

void from_json(const json& j, ModelConfig& c) {
  c = ModelConfig{};
  c.model_id = j.value("model_id", std::string());
  c.endpoint = j.value("endpoint", std::string());
  if (j.contains("temperature")) {
    const auto& t = j["temperature"];
    if (t.is_string() && t.get<std::string>() == "default") {
      c.temperature.reset();
    } else if (t.is_number()) {
      c.temperature = t.get<double>();
    } else {
      throw ParseError("model '" + c.model_id + "': temperature must be a number or \"default\"");
    }
  }
  c.max_turns = j.value("max_turns", 10);
  c.api_key_env = j.value("api_key_env", std::string());
  c.retry_budget = j.value("retry_budget", 3);
  if (j.contains("seed")) c.seed = j["seed"].get<std::int64_t>();
  if (j.contains("request_timeout_ms")) c.request_timeout = std::chrono::milliseconds(j["request_timeout_ms"].get<std::int64_t>());
}

void to_json(json& j, const ModelTurn& t) {
  j = json{{"message", t.message}, {"finish", t.finish == Finish::tool_calls ? "tool_calls" : "final"}};
  if (t.usage) j["usage"] = {{"prompt_tokens", t.usage->prompt_tokens}, {"completion_tokens", t.usage->completion_tokens}};
}

// --- scripted backend --------------------------------------------------------

namespace {

std::vector<json> parse_turn_list(const json& turns, const std::string& where) {
  if (!turns.is_array()) throw ParseError(where + ": \"turns\" must be a list");
  std::vector<json> out;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const auto& t = turns[i];
    const bool calls = t.is_object() && t.contains("tool_calls") && t["tool_calls"].is_array();
    const bool final = t.is_object() && t.contains("final") && t["final"].is_string();
    if (calls == final) throw ParseError(where + ": turn " + std::to_string(i) + " needs exactly one of tool_calls/final");
    if (calls) {
      for (const auto& c : t["tool_calls"]) {
        if (!c.is_object() || !c.contains("tool_name") || !c["tool_name"].is_string()) {
          throw ParseError(where + ": turn " + std::to_string(i) + " has a tool call without tool_name");
        }
      }
    }
    out.push_back(t);
  }
  return out;
}

std::optional<TokenUsage> usage_from(const json& j) {
  if (!j.is_object()) return std::nullopt;
  TokenUsage u;
  u.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
  u.completion_tokens = j.value("completion_tokens", std::int64_t{0});
  return u;
}

std::string user_text(const std::vector<ChatMessage>& history) {
  std::string out;
  for (const auto& m : history) {
    if (m.role == Role::user) {
      out += m.text;
      out.push_back('\n');
    }
  }
  return out;
}

std::size_t assistant_count(const std::vector<ChatMessage>& history) {
  std::size_t n = 0;
  for (const auto& m : history) n += m.role == Role::assistant;
  return n;
}

std::mutex& script_cache_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, Script>& script_cache() {
  static std::map<std::string, Script> cache;
  return cache;
}

}  // namespace

Script Script::parse(const json& doc) {
  if (!doc.is_object()) throw ParseError("scripted model: document must be an object");
  Script s;
  s.turns = parse_turn_list(doc.value("turns", json::array()), "scripted model");
  if (doc.contains("routes")) {
    for (const auto& r : doc["routes"]) {
      Route route;
      route.match = r.at("match").get<std::string>();
      route.turns = parse_turn_list(r.at("turns"), "scripted model route '" + route.match + "'");
      s.routes.push_back(std::move(route));
    }
  }
  return s;
}

Script Script::load(const std::string& name) {
  auto path = fixtures::scripted_model_path(name);
  std::lock_guard lock(script_cache_mutex());
  auto key = path.string();
  if (auto it = script_cache().find(key); it != script_cache().end()) return it->second;
  std::ifstream in(path);
  if (!in) throw GatewayError("scripted model '" + name + "' not found at " + path.string());
  auto doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw GatewayError("scripted model '" + name + "' is not valid JSON");
  Script s = parse(doc);
  script_cache().emplace(key, s);
  return s;
}

ModelTurn Script::turn_for(const std::string& text, std::size_t index) const {
  const std::vector<json>* selected = &turns;
  for (const auto& r : routes) {
    if (text.find(r.match) != std::string::npos) {
      selected = &r.turns;
      break;
    }
  }
  ModelTurn turn;
  turn.message = ChatMessage::assistant("");
  if (index >= selected->size()) return turn;

  const json& t = (*selected)[index];
  if (t.contains("usage")) turn.usage = usage_from(t["usage"]);
  if (t.contains("final")) {
    turn.message.text = t["final"].get<std::string>();
    return turn;
  }
  turn.message.text = t.value("text", std::string());
  std::size_t k = 0;
  for (const auto& c : t["tool_calls"]) {
    ToolCall call;
    call.tool_name = c["tool_name"].get<std::string>();
    call.arguments = c.value("arguments", json::object());
    call.call_id = "call_" + std::to_string(index) + "_" + std::to_string(k++);
    turn.message.tool_calls.push_back(std::move(call));
  }
  turn.finish = turn.message.tool_calls.empty() ? Finish::final : Finish::tool_calls;
  return turn;
}

// --- OpenAI-compatible wire format --------------------------------------------

json build_chat_request(const ModelConfig& config, const std::vector<ChatMessage>& history,
                        const std::vector<ToolSpec>& tools) {
  json messages = json::array();
  for (const auto& m : history) {
    json wire = {{"role", to_string(m.role)}};
    switch (m.role) {
      case Role::assistant:
        wire["content"] = m.text.empty() && !m.tool_calls.empty() ? json(nullptr) : json(m.text);
        if (!m.tool_calls.empty()) {
          json calls = json::array();
          for (const auto& c : m.tool_calls) {
            calls.push_back({{"id", c.call_id},
                             {"type", "function"},
                             {"function", {{"name", c.tool_name}, {"arguments", c.arguments.dump()}}}});
          }
          wire["tool_calls"] = std::move(calls);
        }
        break;
      case Role::tool:
        wire["tool_call_id"] = m.tool_result_for;
        wire["content"] = m.text;
        break;
      default:
        wire["content"] = m.text;
    }
    messages.push_back(std::move(wire));
  }
  json body = {{"model", config.model_id}, {"messages", std::move(messages)}};
  if (!tools.empty()) {
    json fns = json::array();
    for (const auto& t : tools) {
      fns.push_back({{"type", "function"},
                     {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.input_schema}}}});
    }
    body["tools"] = std::move(fns);
  }
  if (config.temperature) body["temperature"] = *config.temperature;
  if (config.seed) body["seed"] = *config.seed;
  return body;
}

ModelTurn parse_chat_response(const json& body) {
  if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw GatewayError("malformed backend response: no choices");
  }
  const auto& choice = body["choices"][0];
  if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object()) {
    throw GatewayError("malformed backend response: choice has no message");
  }
  const auto& msg = choice["message"];
  ModelTurn turn;
  turn.message = ChatMessage::assistant(msg.contains("content") && msg["content"].is_string()
                                            ? msg["content"].get<std::string>()
                                            : std::string());
  if (msg.contains("tool_calls") && msg["tool_calls"].is_array()) {
    std::size_t k = 0;
    for (const auto& c : msg["tool_calls"]) {
      if (!c.is_object() || !c.contains("function") || !c["function"].contains("name")) {
        throw GatewayError("malformed backend response: tool call without function name");
      }
      ToolCall call;
      call.tool_name = c["function"]["name"].get<std::string>();
      call.call_id = c.value("id", "call_" + std::to_string(k));
      const auto& raw = c["function"].value("arguments", json("{}"));
      json args = raw.is_string() ? json::parse(raw.get<std::string>(), nullptr, false) : raw;
      if (args.is_discarded() || !args.is_object()) {
        // Keep the model's text so the server (and later the matcher) sees
        // what it actually produced.
        args = json{{"_unparsed_arguments", raw.is_string() ? raw.get<std::string>() : raw.dump()}};
      }
      call.arguments = std::move(args);
      turn.message.tool_calls.push_back(std::move(call));
      ++k;
    }
  }
  turn.finish = turn.message.tool_calls.empty() ? Finish::final : Finish::tool_calls;
  if (body.contains("usage")) turn.usage = usage_from(body["usage"]);
  return turn;
}

ModelTurn complete_http(const ModelConfig& config, const std::vector<ChatMessage>& history,
                        const std::vector<ToolSpec>& tools);  // gateway_http.cpp

ModelTurn complete(const ModelConfig& config, const std::vector<ChatMessage>& history,
                   const std::vector<ToolSpec>& tools) {
  config.validate();
  if (history.empty()) throw PreconditionError("complete: history must be non-empty");
  if (history.front().role != Role::system && history.front().role != Role::user) {
    throw PreconditionError("complete: history must start with a system or user message");
  }
  for (const auto& m : history) m.validate();

  if (config.is_scripted()) {
    return Script::load(config.script_name()).turn_for(user_text(history), assistant_count(history));
  }
  return complete_http(config, history, tools);
}

}  // namespace mcpeval::gateway
