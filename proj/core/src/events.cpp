#include "mcpeval/events.hpp"

#include <chrono>
#include <iostream>
#include <mutex>

namespace mcpeval::events {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

Sink& current_sink() {
  static Sink sink;
  return sink;
}

}  // namespace

void emit(std::string_view stage, std::string_view event, nlohmann::json fields) {
  nlohmann::json line = nlohmann::json::object();
  line["ts"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count();
  line["stage"] = stage;
  line["event"] = event;
  if (fields.is_object()) {
    for (auto& [k, v] : fields.items()) line[k] = std::move(v);
  }
  const std::string text = line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);

  std::lock_guard lock(sink_mutex());
  if (current_sink()) {
    current_sink()(text);
  } else {
    std::cerr << text << '\n';
  }
}

void warn(std::string_view stage, std::string_view message, nlohmann::json fields) {
  fields["level"] = "warning";
  fields["message"] = message;
  emit(stage, "warning", std::move(fields));
}

void set_sink(Sink sink) {
  std::lock_guard lock(sink_mutex());
  current_sink() = std::move(sink);
}

}  // namespace mcpeval::events
