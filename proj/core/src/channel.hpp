#pragma once

#include <chrono>
#include <memory>

#include <nlohmann/json.hpp>

#include "mcpeval/protocol.hpp"

namespace mcpeval::protocol::detail {

using Clock = std::chrono::steady_clock;

/// One JSON-RPC transport. Implementations throw TransportError /
/// CallTimeoutError carrying the server id.
class Channel {
 public:
  virtual ~Channel() = default;

  /// Sends `request` and blocks until the response with the same id arrives.
  virtual nlohmann::json round_trip(const nlohmann::json& request, Clock::time_point deadline) = 0;

  virtual void notify(const nlohmann::json& notification) = 0;
  virtual void close() noexcept = 0;
  virtual bool is_open() const noexcept = 0;
};

std::unique_ptr<Channel> open_stdio_channel(const ServerConfig& config);
std::unique_ptr<Channel> open_http_channel(const ServerConfig& config);

}  // namespace mcpeval::protocol::detail
