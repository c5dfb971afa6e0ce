#pragma once

#include <functional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

// Structured run log: one JSON object per line on stderr, shared by humans and
// the dashboard activity view.
namespace mcpeval::events {

using Sink = std::function<void(const std::string& line)>;

void emit(std::string_view stage, std::string_view event, nlohmann::json fields = nlohmann::json::object());

void warn(std::string_view stage, std::string_view message, nlohmann::json fields = nlohmann::json::object());

/// Replaces the sink (default writes to stderr). Pass nullptr to restore it.
void set_sink(Sink sink);

/// RAII sink override for tests.
class ScopedSink {
 public:
  explicit ScopedSink(Sink sink) { set_sink(std::move(sink)); }
  ~ScopedSink() { set_sink(nullptr); }
  ScopedSink(const ScopedSink&) = delete;
  ScopedSink& operator=(const ScopedSink&) = delete;
};

}  // namespace mcpeval::events
