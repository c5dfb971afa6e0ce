#pragma once

#include <filesystem>
#include <memory>
#include <string>

// REST facade over a directory of runs: read endpoints for status, reports,
// records and trajectories; write endpoints that launch pipeline work in the
// background.
namespace mcpeval::service {

struct ServiceOptions {
  std::filesystem::path root;
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks an ephemeral port
  std::string allow_origin;  // CORS origin; empty disables CORS headers
  std::filesystem::path ui_dir;  // served under /ui when set
};

class Service {
 public:
  /// Throws PreconditionError when the root directory does not exist.
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket; returns the bound port. Throws Error on
  /// bind failure.
  int bind();
  /// Serves until stop(). Binds first when needed.
  void listen();
  /// Stops listening and waits for background pipeline jobs.
  void stop();
  /// Blocks until no background job is running.
  void wait_idle();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mcpeval::service
