#include <gtest/gtest.h>

#include <sstream>

#include "mcpeval/cli.hpp"
#include "mcpeval/error.hpp"
#include "mcpeval/fixtures.hpp"
#include "mcpeval/hash.hpp"
#include "mcpeval/pipeline.hpp"
#include "mcpeval/storage.hpp"
#include "test_support.hpp"

namespace mcpeval {
namespace {

namespace fs = std::filesystem;
using testing::slurp;
using testing::TempDir;

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mcpeval");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string run_config() { return (fixtures::fixture_dir() / "run.json").string(); }

// Files whose bytes must not depend on timing or scheduling.
std::vector<std::string> stable_files(const fs::path& out) {
  std::vector<std::string> files = {"report.md", "verified.jsonl", "rejected.jsonl", "tasks.jsonl"};
  for (const auto& e : fs::directory_iterator(out)) {
    auto name = e.path().filename().string();
    if (name.rfind("records.", 0) == 0) files.push_back(name);
  }
  std::sort(files.begin(), files.end());
  return files;
}

class PipelineTest : public ::testing::Test {
 protected:
  testing::QuietEvents quiet_;
  TempDir dir_;
};

TEST_F(PipelineTest, UsageErrors) {
  EXPECT_EQ(cli({"bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(cli({}).code, cli::kExitUsage);
  auto missing = cli({"run-all", "--config", (dir_ / "nope.json").string()});
  EXPECT_EQ(missing.code, cli::kExitUsage);
  EXPECT_NE(missing.err.find("does not exist"), std::string::npos);
  EXPECT_EQ(cli({"report"}).code, cli::kExitUsage);
  EXPECT_EQ(cli({"run-all", "--config", run_config(), "--model", "nobody"}).code, cli::kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, cli::kExitOk);
}

TEST_F(PipelineTest, StageWithoutInputsFails) {
  auto r = cli({"analyze", "--config", run_config(), "--out", (dir_ / "run").string()});
  EXPECT_EQ(r.code, cli::kExitStageFailure);
  EXPECT_NE(r.err.find("no records"), std::string::npos) << r.err;
}

TEST_F(PipelineTest, RunAllProducesReportAndStatus) {
  auto out = dir_ / "run";
  auto r = cli({"run-all", "--config", run_config(), "--out", out.string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("report.md"), std::string::npos);
  auto status = pipeline::read_status(out);
  EXPECT_EQ(status["stage"], "done");
  EXPECT_EQ(status["counts"]["tasks"], 11);
  EXPECT_EQ(status["counts"]["verified"], 10);
  EXPECT_EQ(status["counts"]["evaluated"], 20);
  EXPECT_EQ(status["counts"]["judged"], 20);
  EXPECT_EQ(storage::read_jsonl(out / "rejected.jsonl").size(), 1u);
  EXPECT_FALSE(pipeline::RunLock::is_locked(out));
  auto report = storage::read_json(out / "report.json");
  EXPECT_EQ(report["cells"].size(), 4u);
}

TEST_F(PipelineTest, StagesInSequenceMatchRunAll) {
  auto all = dir_ / "all", staged = dir_ / "staged";
  ASSERT_EQ(cli({"run-all", "--config", run_config(), "--out", all.string()}).code, 0);
  for (auto s : pipeline::kAllStages) {
    auto name = std::string(pipeline::to_string(s));
    // Later stages find the config the first one copied into the run dir.
    auto r = s == pipeline::Stage::generate ? cli({name, "--config", run_config(), "--out", staged.string()})
                                            : cli({name, "--out", staged.string()});
    ASSERT_EQ(r.code, 0) << name << ": " << r.err;
  }
  for (const auto& f : stable_files(all)) EXPECT_EQ(slurp(all / f), slurp(staged / f)) << f;
}

TEST_F(PipelineTest, RerunIsIdempotent) {
  auto out = dir_ / "run";
  ASSERT_EQ(cli({"run-all", "--config", run_config(), "--out", out.string()}).code, 0);
  std::map<std::string, std::string> before;
  for (const auto& f : stable_files(out)) before[f] = slurp(out / f);
  ASSERT_EQ(cli({"run-all", "--out", out.string()}).code, 0);
  for (const auto& [f, bytes] : before) EXPECT_EQ(slurp(out / f), bytes) << f;
  ASSERT_EQ(cli({"judge", "--out", out.string(), "--force"}).code, 0);
  ASSERT_EQ(cli({"report", "--out", out.string()}).code, 0);
  EXPECT_EQ(slurp(out / "report.md"), before["report.md"]);
}

TEST_F(PipelineTest, ModelFilterRestrictsCandidates) {
  auto out = dir_ / "run";
  ASSERT_EQ(cli({"run-all", "--config", run_config(), "--out", out.string(), "--model", "cand-weak"}).code, 0);
  EXPECT_FALSE(fs::exists(out / "records.cand-strong.jsonl"));
  EXPECT_EQ(storage::read_jsonl(out / "records.cand-weak.jsonl").size(), 10u);
}

TEST_F(PipelineTest, HeldLockRefusesSecondRun) {
  auto out = dir_ / "run";
  fs::create_directories(out);
  pipeline::RunLock held(out);
  EXPECT_TRUE(pipeline::RunLock::is_locked(out));
  EXPECT_THROW(pipeline::RunLock second(out), PreconditionError);
  auto r = cli({"generate", "--config", run_config(), "--out", out.string()});
  EXPECT_EQ(r.code, cli::kExitStageFailure);
}

TEST_F(PipelineTest, StaleLockIsTakenOver) {
  auto out = dir_ / "run";
  fs::create_directories(out);
  storage::write_atomic(out / ".lock", "999999999\n");
  EXPECT_NO_THROW(pipeline::RunLock lock(out));
}

// The golden report pins every number the fixture run produces. Regenerate
// with tools/regen_golden.sh after an intentional scoring change.
TEST_F(PipelineTest, FixtureReportMatchesGolden) {
  auto catalog = fixtures::FixtureCatalog::load(fixtures::fixture_dir(), MCPEVAL_TEST_GOLDEN_DIR);
  ASSERT_TRUE(catalog.golden.contains("fixture-report"));
  EXPECT_TRUE(catalog.stale_golden_files().empty()) << "golden file edited without updating MANIFEST.json";

  auto out = dir_ / "run";
  ASSERT_EQ(cli({"run-all", "--config", run_config(), "--out", out.string()}).code, 0);
  EXPECT_EQ(slurp(out / "report.md"), slurp(catalog.golden.at("fixture-report").path));
}

TEST(FixtureCatalog, LoadsServersAndScripts) {
  auto catalog = fixtures::FixtureCatalog::load(fixtures::fixture_dir(), MCPEVAL_TEST_GOLDEN_DIR);
  EXPECT_TRUE(catalog.servers.contains("weather"));
  EXPECT_TRUE(catalog.model_scripts.contains("frontier-fixture-run"));
  EXPECT_EQ(catalog.servers.at("echo").args, std::vector<std::string>{"echo"});
}

TEST(FixtureCatalog, DetectsEditedGoldenFile) {
  TempDir dir;
  storage::write_atomic(dir / "a.md", "alpha\n");
  storage::write_json(dir / "MANIFEST.json", {{"a", {{"path", "a.md"}, {"sha256", sha256_hex("alpha\n")}}},
                                              {"gone", {{"path", "gone.md"}, {"sha256", sha256_hex("")}}}});
  auto catalog = fixtures::FixtureCatalog::load(dir / "none", dir.path());
  EXPECT_EQ(catalog.stale_golden_files(), std::vector<std::string>{"gone"});
  storage::write_atomic(dir / "a.md", "beta\n");
  EXPECT_EQ(catalog.stale_golden_files(), (std::vector<std::string>{"a", "gone"}));
}

}  // namespace
}  // namespace mcpeval
