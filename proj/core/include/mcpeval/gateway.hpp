#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcpeval/protocol.hpp"

// Chat-model abstraction shared by every LLM-backed stage. Endpoints are either
// OpenAI-compatible chat-completions URLs or "scripted:<fixture>" files.
namespace mcpeval::gateway {

using json = nlohmann::json;
using protocol::ToolCall;
using protocol::ToolSpec;

enum class Role { system, user, assistant, tool };

std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

struct ChatMessage {
  Role role = Role::user;
  std::string text;
  std::vector<ToolCall> tool_calls;  // assistant only
  std::string tool_result_for;       // tool only: the answered call_id

  static ChatMessage system(std::string text);
  static ChatMessage user(std::string text);
  static ChatMessage assistant(std::string text, std::vector<ToolCall> calls = {});
  static ChatMessage tool(std::string call_id, std::string text);

  /// Throws PreconditionError when role-specific fields are misused.
  void validate() const;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

void to_json(json& j, const ChatMessage& m);
void from_json(const json& j, ChatMessage& m);

/// Sampling temperature used when a config does not say otherwise.
inline constexpr double kDefaultTemperature = 0.01;

struct ModelConfig {
  std::string model_id;
  std::string endpoint;  // http(s) url or "scripted:<fixture-name>"
  /// nullopt means "let the backend choose" (serialized as "default").
  std::optional<double> temperature = kDefaultTemperature;
  int max_turns = 10;
  std::string api_key_env;
  int retry_budget = 3;
  std::optional<std::int64_t> seed;
  std::chrono::milliseconds request_timeout{120'000};

  void validate() const;
  bool is_scripted() const;
  /// Fixture name after the "scripted:" prefix.
  std::string script_name() const;
};

void to_json(json& j, const ModelConfig& c);
void from_json(const json& j, ModelConfig& c);

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

enum class Finish { tool_calls, final };

struct ModelTurn {
  ChatMessage message;  // role = assistant
  Finish finish = Finish::final;
  std::optional<TokenUsage> usage;

  friend bool operator==(const ModelTurn&, const ModelTurn&) = default;
};

void to_json(json& j, const ModelTurn& t);

/// One assistant turn for `history`. Tool names requested by the model are
/// not checked against `tools` here; that is the caller's job.
ModelTurn complete(const ModelConfig& config, const std::vector<ChatMessage>& history,
                   const std::vector<ToolSpec>& tools);

/// A parsed scripted-model file.
struct Script {
  struct Route {
    std::string match;  // substring of the conversation's user text
    std::vector<json> turns;
  };
  std::vector<json> turns;
  std::vector<Route> routes;

  static Script parse(const json& doc);
  static Script load(const std::string& name);

  /// The turn at `index` of the route selected by `user_text`. An exhausted
  /// script yields a final turn with empty text.
  ModelTurn turn_for(const std::string& user_text, std::size_t index) const;
};

/// Request body sent to an OpenAI-compatible chat-completions endpoint.
json build_chat_request(const ModelConfig& config, const std::vector<ChatMessage>& history,
                        const std::vector<ToolSpec>& tools);

/// Parses a chat-completions response body. Throws GatewayError when malformed.
ModelTurn parse_chat_response(const json& body);

}  // namespace mcpeval::gateway
