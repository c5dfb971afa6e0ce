#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

// MCP session layer: JSON-RPC 2.0 over a line-framed stdio subprocess or
// streamable HTTP, exposing the handshake, tools/list and tools/call.
namespace mcpeval::protocol {

using json = nlohmann::json;
using Millis = std::chrono::milliseconds;

/// Protocol revision the client announces in initialize.
inline constexpr const char* kClientProtocolVersion = "2025-03-26";

/// Revisions accepted in the server's initialize response.
bool is_supported_protocol_version(const std::string& version);

enum class TransportKind { stdio, http };

struct ServerConfig {
  std::string id;
  TransportKind transport = TransportKind::stdio;
  std::string command;  // stdio only
  std::vector<std::string> args;
  std::string url;  // http only
  std::map<std::string, std::string> env;
  std::map<std::string, std::string> headers;  // static headers, http only
  Millis connect_timeout{10'000};
  Millis call_timeout{60'000};

  /// Throws PreconditionError when the transport/endpoint fields disagree.
  void validate() const;
};

void to_json(json& j, const ServerConfig& c);
void from_json(const json& j, ServerConfig& c);

/// Reads a server config document (`{"servers": [...]}`), checking id uniqueness.
std::vector<ServerConfig> parse_server_configs(const json& doc);
std::vector<ServerConfig> load_server_configs(const std::filesystem::path& file);

struct ToolSpec {
  std::string name;
  std::string description;
  json input_schema = json::object();

  friend bool operator==(const ToolSpec&, const ToolSpec&) = default;
};

void to_json(json& j, const ToolSpec& t);
void from_json(const json& j, ToolSpec& t);

struct ToolCall {
  std::string tool_name;
  json arguments = json::object();
  std::string call_id;

  friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

void to_json(json& j, const ToolCall& c);
void from_json(const json& j, ToolCall& c);

struct ToolResult {
  std::string call_id;
  json content = json::array();  // MCP content blocks
  bool is_error = false;

  /// Text blocks joined by '\n'; non-text blocks are serialized as JSON.
  std::string text() const;

  friend bool operator==(const ToolResult&, const ToolResult&) = default;
};

void to_json(json& j, const ToolResult& r);
void from_json(const json& j, ToolResult& r);

/// Builds a single-text-block result.
ToolResult text_result(std::string call_id, std::string text, bool is_error = false);

struct ServerInfo {
  std::string name;
  std::string version;
  std::string protocol_version;
};

/// Turns a `tools/list` result page into specs. `base_index` offsets the index
/// reported in parse errors so multi-page listings name the global position.
std::vector<ToolSpec> parse_tool_page(const json& result, std::size_t base_index,
                                      const std::string& server_id);

namespace detail {
class Channel;
}

/// A live MCP client session. Not safe for concurrent use; may be moved
/// between threads.
class Session {
 public:
  /// Spawns/opens the transport and completes the initialize handshake.
  static Session connect(const ServerConfig& config);

  Session(Session&&) noexcept;
  Session& operator=(Session&&) noexcept;
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;
  ~Session();

  const ServerInfo& server_info() const noexcept { return info_; }
  const ServerConfig& config() const noexcept { return config_; }
  bool is_open() const noexcept;

  /// Every advertised tool, following nextCursor until exhausted.
  std::vector<ToolSpec> list_tools();

  /// Tool-level failures come back as is_error=true; only transport
  /// failures and timeouts throw.
  ToolResult call_tool(const ToolCall& call);

  void close() noexcept;

 private:
  Session(ServerConfig config, std::unique_ptr<detail::Channel> channel);
  json request(const std::string& method, json params, Millis timeout);

  ServerConfig config_;
  std::unique_ptr<detail::Channel> channel_;
  ServerInfo info_;
  std::int64_t next_id_ = 1;
};

}  // namespace mcpeval::protocol
