#include <httplib.h>

#include <optional>
#include <sstream>

#include "channel.hpp"
#include "mcpeval/error.hpp"

namespace mcpeval::protocol::detail {
namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

std::optional<ParsedUrl> parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) return std::nullopt;
  std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") return std::nullopt;
  auto host_begin = scheme_end + 3;
  auto path_begin = url.find('/', host_begin);
  std::string host = url.substr(host_begin, path_begin == std::string::npos ? std::string::npos
                                                                           : path_begin - host_begin);
  if (host.empty()) return std::nullopt;
  return ParsedUrl{scheme + "://" + host,
                   path_begin == std::string::npos ? std::string("/") : url.substr(path_begin)};
}

/// Pulls the JSON-RPC message with `id` out of a text/event-stream body.
std::optional<nlohmann::json> find_in_event_stream(const std::string& body, const nlohmann::json& id) {
  std::istringstream in(body);
  std::string line, data;
  auto flush = [&]() -> std::optional<nlohmann::json> {
    if (data.empty()) return std::nullopt;
    auto msg = nlohmann::json::parse(data, nullptr, false);
    data.clear();
    if (!msg.is_discarded() && msg.is_object() && msg.contains("id") && msg["id"] == id) return msg;
    return std::nullopt;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (auto m = flush()) return m;
    } else if (line.rfind("data:", 0) == 0) {
      std::string_view chunk(line);
      chunk.remove_prefix(5);
      if (!chunk.empty() && chunk.front() == ' ') chunk.remove_prefix(1);
      if (!data.empty()) data.push_back('\n');
      data.append(chunk);
    }
  }
  return flush();
}

class HttpChannel final : public Channel {
 public:
  HttpChannel(const ServerConfig& config, ParsedUrl url)
      : server_id_(config.id), path_(std::move(url.path)), client_(url.origin) {
    for (const auto& [k, v] : config.headers) headers_.emplace(k, v);
    client_.set_keep_alive(true);
  }

  nlohmann::json round_trip(const nlohmann::json& request, Clock::time_point deadline) override {
    auto res = post(request, deadline);
    if (res->status == 202) throw TransportError(server_id_, "server accepted a request without responding");
    std::string content_type = res->get_header_value("Content-Type");
    if (content_type.find("text/event-stream") != std::string::npos) {
      if (auto msg = find_in_event_stream(res->body, request.at("id"))) return *msg;
      throw TransportError(server_id_, "event stream ended without a response");
    }
    auto msg = nlohmann::json::parse(res->body, nullptr, false);
    if (msg.is_discarded() || !msg.is_object()) throw TransportError(server_id_, "response body is not a JSON object");
    return msg;
  }

  void notify(const nlohmann::json& notification) override {
    post(notification, Clock::now() + std::chrono::seconds(10));
  }

  void close() noexcept override {
    if (!open_) return;
    open_ = false;
    if (!session_id_.empty()) {
      httplib::Headers h = headers_;
      h.emplace("Mcp-Session-Id", session_id_);
      client_.set_read_timeout(std::chrono::milliseconds(500));
      client_.Delete(path_, h);
    }
    client_.stop();
  }

  bool is_open() const noexcept override { return open_; }

 private:
  httplib::Result post(const nlohmann::json& msg, Clock::time_point deadline) {
    if (!open_) throw TransportError(server_id_, "session is closed");
    auto start = Clock::now();
    auto budget = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - start);
    if (budget.count() <= 0) throw CallTimeoutError(server_id_, "deadline already passed");
    client_.set_connection_timeout(budget);
    client_.set_read_timeout(budget);
    client_.set_write_timeout(budget);

    httplib::Headers h = headers_;
    h.emplace("Accept", "application/json, text/event-stream");
    h.emplace("MCP-Protocol-Version", kClientProtocolVersion);
    if (!session_id_.empty()) h.emplace("Mcp-Session-Id", session_id_);

    auto res = client_.Post(path_, h, msg.dump(), "application/json");
    if (!res) {
      auto err = res.error();
      bool timed_out = err == httplib::Error::ConnectionTimeout ||
                       ((err == httplib::Error::Read || err == httplib::Error::Connection) &&
                        Clock::now() >= deadline - budget / 10);
      if (timed_out) throw CallTimeoutError(server_id_, "HTTP request timed out (" + httplib::to_string(err) + ")");
      throw TransportError(server_id_, "HTTP request failed: " + httplib::to_string(err));
    }
    if (res->status == 404 && !session_id_.empty()) {
      open_ = false;
      throw TransportError(server_id_, "server dropped the session (404)");
    }
    if (res->status >= 400) {
      throw TransportError(server_id_, "HTTP status " + std::to_string(res->status));
    }
    if (auto sid = res->get_header_value("Mcp-Session-Id"); !sid.empty()) session_id_ = sid;
    return res;
  }

  std::string server_id_;
  std::string path_;
  httplib::Client client_;
  httplib::Headers headers_;
  std::string session_id_;
  bool open_ = true;
};

}  // namespace

std::unique_ptr<Channel> open_http_channel(const ServerConfig& config) {
  auto url = parse_url(config.url);
  if (!url) throw ConnectError(config.id, "malformed url '" + config.url + "'");
  return std::make_unique<HttpChannel>(config, std::move(*url));
}

}  // namespace mcpeval::protocol::detail
