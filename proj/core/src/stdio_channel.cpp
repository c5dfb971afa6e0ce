#include <system_error>

#include "channel.hpp"
#include "child_process.hpp"
#include "mcpeval/error.hpp"
#include "mcpeval/events.hpp"

namespace mcpeval::protocol::detail {
namespace {

class StdioChannel final : public Channel {
 public:
  StdioChannel(std::string server_id, mcpeval::detail::ChildProcess process)
      : server_id_(std::move(server_id)), process_(std::move(process)) {}

  nlohmann::json round_trip(const nlohmann::json& request, Clock::time_point deadline) override {
    send(request);
    const auto& id = request.at("id");
    std::string line;
    for (;;) {
      switch (process_.read_line(line, deadline)) {
        case mcpeval::detail::ChildProcess::ReadStatus::timeout:
          throw CallTimeoutError(server_id_, "timed out waiting for response to '" +
                                                 request.value("method", std::string()) + "'");
        case mcpeval::detail::ChildProcess::ReadStatus::eof:
          open_ = false;
          throw TransportError(server_id_, "server closed its stdout");
        case mcpeval::detail::ChildProcess::ReadStatus::line:
          break;
      }
      if (line.empty()) continue;
      auto msg = nlohmann::json::parse(line, nullptr, false);
      if (msg.is_discarded() || !msg.is_object()) {
        events::warn("protocol", "ignoring non-JSON line from server", {{"server", server_id_}});
        continue;
      }
      if (msg.contains("method")) {
        // Server-initiated request or notification; we expose no client
        // capabilities, so requests get method-not-found.
        if (msg.contains("id")) {
          send({{"jsonrpc", "2.0"},
                {"id", msg["id"]},
                {"error", {{"code", -32601}, {"message", "method not found"}}}});
        }
        continue;
      }
      if (msg.contains("id") && msg["id"] == id) return msg;
    }
  }

  void notify(const nlohmann::json& notification) override { send(notification); }

  void close() noexcept override {
    open_ = false;
    process_.terminate();
  }

  bool is_open() const noexcept override { return open_ && process_.running(); }

 private:
  void send(const nlohmann::json& msg) {
    if (!is_open()) throw TransportError(server_id_, "session is closed");
    if (!process_.write_line(msg.dump())) {
      open_ = false;
      throw TransportError(server_id_, "broken pipe writing to server");
    }
  }

  std::string server_id_;
  mcpeval::detail::ChildProcess process_;
  bool open_ = true;
};

}  // namespace

std::unique_ptr<Channel> open_stdio_channel(const ServerConfig& config) {
  try {
    auto child = mcpeval::detail::ChildProcess::spawn(config.command, config.args, config.env);
    return std::make_unique<StdioChannel>(config.id, std::move(child));
  } catch (const std::system_error& e) {
    throw ConnectError(config.id, std::string("cannot spawn server: ") + e.what());
  }
}

}  // namespace mcpeval::protocol::detail
