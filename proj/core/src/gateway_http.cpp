#include <httplib.h>

#include <cstdlib>
#include <map>
#include <mutex>
#include <thread>

#include "mcpeval/error.hpp"
#include "mcpeval/events.hpp"
#include "mcpeval/gateway.hpp"

namespace mcpeval::gateway {
namespace {

using Clock = std::chrono::steady_clock;

/// Earliest time each endpoint may be hit again after a 429.
class BackoffTable {
 public:
  void wait_turn(const std::string& endpoint) {
    Clock::time_point until;
    {
      std::lock_guard lock(mu_);
      auto it = next_allowed_.find(endpoint);
      if (it == next_allowed_.end()) return;
      until = it->second;
    }
    std::this_thread::sleep_until(until);
  }

  void push_back(const std::string& endpoint, std::chrono::milliseconds delay) {
    std::lock_guard lock(mu_);
    auto& slot = next_allowed_[endpoint];
    slot = std::max(slot, Clock::now() + delay);
  }

 private:
  std::mutex mu_;
  std::map<std::string, Clock::time_point> next_allowed_;
};

BackoffTable& backoff() {
  static BackoffTable table;
  return table;
}

struct Target {
  std::string origin;
  std::string path;
};

Target split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw PreconditionError("model endpoint '" + endpoint + "' is not a url");
  auto path_begin = endpoint.find('/', scheme_end + 3);
  Target t;
  t.origin = endpoint.substr(0, path_begin);
  std::string path = path_begin == std::string::npos ? std::string() : endpoint.substr(path_begin);
  while (!path.empty() && path.back() == '/') path.pop_back();
  const std::string suffix = "/chat/completions";
  if (path.size() < suffix.size() || path.compare(path.size() - suffix.size(), suffix.size(), suffix) != 0) {
    path += suffix;
  }
  t.path = path;
  return t;
}

double parse_retry_after(const httplib::Response& res) {
  auto v = res.get_header_value("Retry-After");
  if (v.empty()) return -1.0;
  char* end = nullptr;
  double s = std::strtod(v.c_str(), &end);
  return end == v.c_str() ? -1.0 : s;
}

ModelTurn single_request(const ModelConfig& config, const Target& target, const json& body) {
  httplib::Client client(target.origin);
  client.set_connection_timeout(config.request_timeout);
  client.set_read_timeout(config.request_timeout);
  client.set_write_timeout(config.request_timeout);

  httplib::Headers headers;
  if (!config.api_key_env.empty()) {
    const char* key = std::getenv(config.api_key_env.c_str());
    if (!key || !*key) {
      throw GatewayError("model '" + config.model_id + "': env var " + config.api_key_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  auto res = client.Post(target.path, headers, body.dump(), "application/json");
  if (!res) {
    throw GatewayError("model '" + config.model_id + "': request failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429) {
    throw RateLimitError("model '" + config.model_id + "': rate limited", parse_retry_after(*res));
  }
  if (res->status == 401 || res->status == 403) {
    throw GatewayError("model '" + config.model_id + "': authentication rejected (HTTP " + std::to_string(res->status) + ")");
  }
  if (res->status >= 400) {
    throw GatewayError("model '" + config.model_id + "': HTTP " + std::to_string(res->status));
  }
  auto parsed = json::parse(res->body, nullptr, false);
  if (parsed.is_discarded()) throw GatewayError("malformed backend response: body is not JSON");
  return parse_chat_response(parsed);
}

}  // namespace

ModelTurn complete_http(const ModelConfig& config, const std::vector<ChatMessage>& history,
                        const std::vector<ToolSpec>& tools) {
  const Target target = split_endpoint(config.endpoint);
  const json body = build_chat_request(config, history, tools);
  for (int attempt = 0;; ++attempt) {
    backoff().wait_turn(config.endpoint);
    try {
      return single_request(config, target, body);
    } catch (const RateLimitError& e) {
      if (attempt >= config.retry_budget) throw;
      double hint = e.retry_after();
      auto delay = hint >= 0 ? std::chrono::milliseconds(static_cast<std::int64_t>(std::min(hint, 60.0) * 1000))
                             : std::chrono::milliseconds(500LL << std::min(attempt, 6));
      events::emit("gateway", "rate_limited",
                   {{"model", config.model_id}, {"retry", attempt + 1}, {"budget", config.retry_budget},
                    {"delay_ms", delay.count()}});
      backoff().push_back(config.endpoint, delay);
    }
  }
}

}  // namespace mcpeval::gateway
