#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "mcpeval/error.hpp"
#include "mcpeval/pipeline.hpp"
#include "mcpeval/protocol.hpp"
#include "mcpeval/storage.hpp"
#include "mcpeval/worker_pool.hpp"
#include "test_support.hpp"

namespace mcpeval {
namespace {

using json = nlohmann::json;
using testing::TempDir;

TEST(ServerConfig, ParsesAndValidates) {
  auto servers = protocol::parse_server_configs(json::parse(R"({"servers": [
    {"id": "a", "command": "srv", "args": ["--x"], "env": {"K": "v"}, "call_timeout_ms": 500},
    {"id": "b", "url": "https://example.test/mcp", "headers": {"Authorization": "Bearer t"}}]})"));
  ASSERT_EQ(servers.size(), 2u);
  EXPECT_EQ(servers[0].transport, protocol::TransportKind::stdio);
  EXPECT_EQ(servers[0].call_timeout.count(), 500);
  EXPECT_EQ(servers[1].transport, protocol::TransportKind::http);
  EXPECT_EQ(json(servers[1]).get<protocol::ServerConfig>().url, servers[1].url);

  EXPECT_THROW(protocol::parse_server_configs(json::parse(R"({"servers": [{"id": "a", "command": "x"},
                                                              {"id": "a", "command": "y"}]})")),
               PreconditionError);
  EXPECT_THROW(protocol::parse_server_configs(json::parse(R"({"servers": [{"id": "a"}]})")), PreconditionError);
  EXPECT_THROW(protocol::parse_server_configs(json::parse(R"({"servers": [{"id": "a", "transport": "http",
                                                              "url": "ftp://x"}]})")),
               PreconditionError);
  EXPECT_THROW(protocol::parse_server_configs(json::parse(R"({"servers": [{"id": "a", "transport": "pigeon"}]})")),
               ParseError);
  EXPECT_THROW(protocol::parse_server_configs(json::parse(R"({"nope": 1})")), ParseError);
}

TEST(ProtocolVersion, AcceptedRevisions) {
  EXPECT_TRUE(protocol::is_supported_protocol_version("2024-11-05"));
  EXPECT_TRUE(protocol::is_supported_protocol_version(protocol::kClientProtocolVersion));
  EXPECT_TRUE(protocol::is_supported_protocol_version("2025-06-18"));
  EXPECT_FALSE(protocol::is_supported_protocol_version("2023-01-01"));
}

TEST(ToolPage, ReportsGlobalIndexOfMalformedEntry) {
  json page = json::parse(R"({"tools": [{"name": "ok", "inputSchema": {}}, {"description": "x", "inputSchema": {}}]})");
  try {
    protocol::parse_tool_page(page, 5, "srv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("index 6"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[srv]"), std::string::npos);
  }
  EXPECT_EQ(protocol::parse_tool_page(json::parse(R"({"tools": []})"), 0, "s").size(), 0u);
}

TEST(PipelineConfig, FixtureShorthandAndDefaults) {
  auto c = pipeline::PipelineConfig::from_json(json::parse(R"({
    "servers": [{"fixture": "weather"}, {"fixture": "echo", "id": "echo2", "call_timeout_ms": 250}],
    "candidates": [{"model_id": "a", "endpoint": "scripted:always-final"}], "seed": 4})"));
  ASSERT_EQ(c.servers.size(), 2u);
  EXPECT_EQ(c.servers[0].id, "weather");
  EXPECT_EQ(c.servers[1].id, "echo2");
  EXPECT_EQ(c.servers[1].call_timeout.count(), 250);
  EXPECT_EQ(c.generation_count, 5);
  EXPECT_EQ(c.verify_max_attempts, 3);
  EXPECT_EQ(c.judge_attempts, 3);
  EXPECT_EQ(c.workers, 4u);
  EXPECT_EQ(c.candidates[0].seed, 4);
  EXPECT_EQ(c.match.w_order, 0.2);
}

TEST(PipelineConfig, ErrorsNameTheField) {
  for (const char* doc : {R"({})", R"({"servers": []})", R"({"servers": [{"fixture": "weather"}, {"fixture": "weather"}]})"}) {
    try {
      pipeline::PipelineConfig::from_json(json::parse(doc));
      FAIL() << doc;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find("\"servers\""), std::string::npos) << e.what();
    }
  }
  EXPECT_THROW(pipeline::PipelineConfig::from_json(json::parse(R"({"servers": [{"fixture": "nope"}]})")),
               PreconditionError);
  EXPECT_THROW(pipeline::PipelineConfig::from_json(json::parse(R"({"servers": [{"fixture": "echo"}], "workers": 0})")),
               ParseError);
  EXPECT_THROW(pipeline::PipelineConfig::from_json(
                   json::parse(R"({"servers": [{"fixture": "echo"}], "match": {"w_name": 0.9}})")),
               PreconditionError);
}

TEST(PipelineConfig, HashIgnoresOutputLocationAndWorkers) {
  json doc = json::parse(R"({"servers": [{"fixture": "echo"}], "out": "a", "workers": 1})");
  auto h = pipeline::PipelineConfig::from_json(doc).hash();
  doc["out"] = "b";
  doc["workers"] = 8;
  EXPECT_EQ(pipeline::PipelineConfig::from_json(doc).hash(), h);
  doc["seed"] = 1;
  EXPECT_NE(pipeline::PipelineConfig::from_json(doc).hash(), h);
}

TEST(Stage, NamesRoundTrip) {
  for (auto s : pipeline::kAllStages) EXPECT_EQ(pipeline::stage_from_string(pipeline::to_string(s)), s);
  EXPECT_FALSE(pipeline::stage_from_string("deploy").has_value());
  EXPECT_EQ(pipeline::status_stage(pipeline::Stage::analyze), "evaluating");
}

TEST(Storage, JsonlAndAtomicWrites) {
  TempDir dir;
  auto f = dir / "x" / "lines.jsonl";
  EXPECT_TRUE(storage::read_jsonl(f).empty());
  storage::append_jsonl(f, {{"a", 1}});
  storage::append_jsonl(f, {{"a", 2}});
  auto lines = storage::read_jsonl(f);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[1]["a"], 2);
  storage::write_jsonl(f, {json{{"b", 3}}});
  EXPECT_EQ(storage::read_text(f), "{\"b\":3}\n");
  storage::write_json(dir / "doc.json", {{"k", "v"}});
  EXPECT_EQ(storage::read_json(dir / "doc.json")["k"], "v");
  storage::write_atomic(dir / "bad.json", "{oops");
  EXPECT_THROW(storage::read_json(dir / "bad.json"), ParseError);
  EXPECT_EQ(storage::safe_name("a/b c:d.e-f_g"), "a_b_c_d.e-f_g");
  EXPECT_EQ(storage::utc_now_iso().size(), 24u);
}

TEST(WorkerPool, CommitsInIndexOrder) {
  std::vector<std::size_t> committed;
  ordered_parallel_for<std::size_t>(
      50, 4,
      [](std::size_t i) {
        std::this_thread::sleep_for(std::chrono::microseconds((50 - i) * 20));
        return i * i;
      },
      [&](std::size_t i, std::size_t& r) {
        EXPECT_EQ(r, i * i);
        committed.push_back(i);
      });
  ASSERT_EQ(committed.size(), 50u);
  for (std::size_t i = 0; i < committed.size(); ++i) EXPECT_EQ(committed[i], i);
}

TEST(WorkerPool, RethrowsFirstFailure) {
  std::atomic<int> done{0};
  EXPECT_THROW(ordered_parallel_for<int>(
                   20, 3,
                   [&](std::size_t i) {
                     if (i == 5) throw Error("boom");
                     ++done;
                     return 0;
                   },
                   [](std::size_t, int&) {}),
               Error);
  EXPECT_LT(done.load(), 20);
}

}  // namespace
}  // namespace mcpeval
