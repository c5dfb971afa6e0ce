#pragma once

#include <sys/types.h>

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mcpeval::detail {

/// Subprocess with piped stdin/stdout, read line by line.
class ChildProcess {
 public:
  using Clock = std::chrono::steady_clock;

  /// Throws std::system_error when the program cannot be executed.
  static ChildProcess spawn(const std::string& program, const std::vector<std::string>& args,
                            const std::map<std::string, std::string>& env_overrides);

  ChildProcess(ChildProcess&& other) noexcept;
  ChildProcess& operator=(ChildProcess&& other) noexcept;
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;
  ~ChildProcess();

  /// Writes `line` plus '\n'. Returns false if the pipe is broken.
  bool write_line(std::string_view line);

  enum class ReadStatus { line, timeout, eof };

  /// Reads one '\n'-terminated line (terminator stripped) before `deadline`.
  ReadStatus read_line(std::string& out, Clock::time_point deadline);

  bool running() const noexcept { return pid_ > 0; }
  void terminate() noexcept;

 private:
  ChildProcess() = default;

  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

}  // namespace mcpeval::detail
