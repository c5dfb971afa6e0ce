#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcpeval/protocol.hpp"

// Deterministic offline assets: fixture MCP servers, scripted model files and
// golden outputs.
namespace mcpeval::fixtures {

using json = nlohmann::json;

/// Names accepted by FixtureServer::create and the fixture server binary.
std::vector<std::string> server_fixture_names();

/// MCP server logic for one fixture. A pure function of (tool, arguments,
/// call ordinal); the ordinal is per instance, so one instance per process.
class FixtureServer {
 public:
  virtual ~FixtureServer() = default;

  /// Throws PreconditionError for an unknown name.
  static std::unique_ptr<FixtureServer> create(const std::string& name);

  /// Handles one JSON-RPC message. Returns the response, or nullopt for
  /// notifications and for fixtures that deliberately stay silent.
  virtual std::optional<json> handle(const json& message) = 0;

  virtual const std::string& name() const = 0;
};

/// Serves `name` as line-delimited JSON-RPC until `in` reaches EOF.
int run_stdio_server(const std::string& name, std::istream& in, std::ostream& out);

/// Fixture tree root: $MCP_EVAL_FIXTURE_DIR, else the in-repo fixtures/ dir.
std::filesystem::path fixture_dir();

/// Path of the fixture server executable: $MCP_EVAL_FIXTURE_SERVER, the
/// build-tree binary, a sibling of the running executable, or PATH lookup.
std::string fixture_server_program();

/// Reads fixtures/servers/<name>.json and returns a ServerConfig that spawns
/// the fixture over stdio. Throws PreconditionError for an unknown fixture.
protocol::ServerConfig launch_fixture(const std::string& name);

/// Resolves a scripted model name to fixtures/models/<name>.json; names that
/// are already paths to existing files are returned unchanged.
std::filesystem::path scripted_model_path(const std::string& name);

struct GoldenFile {
  std::filesystem::path path;
  std::string sha256;
};

struct FixtureCatalog {
  std::map<std::string, protocol::ServerConfig> servers;
  std::map<std::string, json> model_scripts;
  std::map<std::string, GoldenFile> golden;

  /// Scans <root>/servers, <root>/models and <golden_dir>/MANIFEST.json.
  static FixtureCatalog load(const std::filesystem::path& root, const std::filesystem::path& golden_dir);

  /// Names of golden files whose content hash differs from the manifest.
  std::vector<std::string> stale_golden_files() const;
};

}  // namespace mcpeval::fixtures
