#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

// Small filesystem helpers shared by the pipeline stages.
namespace mcpeval::storage {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// Replaces every character outside [A-Za-z0-9._-] with '_'.
std::string safe_name(std::string_view id);

/// Writes to a sibling temp file then renames over `path`.
void write_atomic(const fs::path& path, std::string_view content);

void write_json(const fs::path& path, const json& doc, int indent = 2);
json read_json(const fs::path& path);

/// Every non-empty line parsed as JSON. A missing file yields no lines.
std::vector<json> read_jsonl(const fs::path& path);
void append_jsonl(const fs::path& path, const json& line);
void write_jsonl(const fs::path& path, const std::vector<json>& lines);

std::string read_text(const fs::path& path);

/// Current UTC time as ISO-8601 with milliseconds.
std::string utc_now_iso();

}  // namespace mcpeval::storage
