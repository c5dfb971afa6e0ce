#include <gtest/gtest.h>

#include "mcpeval/error.hpp"
#include "mcpeval/executor.hpp"
#include "mcpeval/fixtures.hpp"
#include "mcpeval/hash.hpp"
#include "mcpeval/storage.hpp"
#include "mcpeval/verifier.hpp"
#include "test_support.hpp"

namespace mcpeval {
namespace {

using json = nlohmann::json;
using executor::Termination;
using fixtures::launch_fixture;
using testing::scripted;
using testing::TempDir;
using verifier::Clause;

taskgen::TaskSpec make_task(std::string instruction, std::string domain = "weather") {
  taskgen::TaskSpec t;
  t.domain = std::move(domain);
  t.instruction = std::move(instruction);
  t.task_id = taskgen::task_id_for(t.domain, t.instruction);
  t.created_by = "test";
  return t;
}

class AgentTest : public ::testing::Test {
 protected:
  testing::QuietEvents quiet_;
};

// --- executor ---------------------------------------------------------------

TEST_F(AgentTest, SingleCallThenFinal) {
  auto t = executor::run_agent(make_task("Paris, 3 days"), launch_fixture("weather"), scripted("call-then-final"));
  EXPECT_EQ(t.terminated, Termination::final);
  EXPECT_EQ(t.final_text, "Paris forecast retrieved.");
  ASSERT_EQ(t.calls.size(), 1u);
  EXPECT_EQ(t.calls[0].call.call_id, "call_0_0");
  EXPECT_FALSE(t.calls[0].result.is_error);
  EXPECT_EQ(t.prompt_template_hash, executor::prompt_template_hash());
  EXPECT_EQ(executor::prompt_template_hash(), sha256_hex(executor::system_prompt_template()));
  EXPECT_EQ(t.messages[0].text, executor::system_prompt_template());
  EXPECT_EQ(t.messages[1].text, "Paris, 3 days");
  EXPECT_NO_THROW(t.validate());
}

TEST_F(AgentTest, ImmediateFinalHasNoCalls) {
  auto t = executor::run_agent(make_task("hi"), launch_fixture("weather"), scripted("always-final"));
  EXPECT_EQ(t.terminated, Termination::final);
  EXPECT_TRUE(t.calls.empty());
  EXPECT_EQ(t.messages.size(), 3u);
}

TEST_F(AgentTest, TurnBudgetEndsTheLoop) {
  auto model = scripted("loop-forever");
  model.max_turns = 4;
  auto t = executor::run_agent(make_task("loop"), launch_fixture("weather"), model);
  EXPECT_EQ(t.terminated, Termination::max_turns);
  EXPECT_EQ(t.calls.size(), 4u);
  EXPECT_TRUE(t.final_text.empty());
  EXPECT_NO_THROW(t.validate());
}

TEST_F(AgentTest, ToolErrorIsFedBackAndRunContinues) {
  auto t = executor::run_agent(make_task("try", "echo"), launch_fixture("echo"), scripted("error-then-final"));
  EXPECT_EQ(t.terminated, Termination::final);
  ASSERT_EQ(t.calls.size(), 2u);
  EXPECT_TRUE(t.calls[0].result.is_error);
  EXPECT_FALSE(t.calls[1].result.is_error);
  EXPECT_NE(t.messages[3].text.find("fixture failure: boom"), std::string::npos);
}

TEST_F(AgentTest, UnknownToolIsNotSentToServer) {
  auto t = executor::run_agent(make_task("go", "echo"), launch_fixture("echo"), scripted("unknown-tool"));
  ASSERT_EQ(t.calls.size(), 1u);
  EXPECT_TRUE(t.calls[0].result.is_error);
  EXPECT_EQ(t.calls[0].result.text(), "unknown tool: teleport");
  EXPECT_EQ(t.terminated, Termination::final);
}

TEST_F(AgentTest, ParallelCallsRunInOrder) {
  auto t = executor::run_agent(make_task("two", "echo"), launch_fixture("echo"), scripted("two-calls-one-turn"));
  ASSERT_EQ(t.calls.size(), 2u);
  EXPECT_EQ(t.calls[0].result.text(), "one");
  EXPECT_EQ(t.calls[1].result.text(), "two");
  EXPECT_EQ(t.messages[3].tool_result_for, "call_0_0");
  EXPECT_EQ(t.messages[4].tool_result_for, "call_0_1");
  EXPECT_NO_THROW(t.validate());
}

TEST_F(AgentTest, CallTimeoutEndsRunWithError) {
  auto server = launch_fixture("echo");
  server.call_timeout = protocol::Millis(200);
  auto t = executor::run_agent(make_task("slow", "echo"), server, scripted("slow-call"));
  EXPECT_EQ(t.terminated, Termination::error);
  ASSERT_EQ(t.calls.size(), 1u);
  EXPECT_TRUE(t.calls[0].result.is_error);
  EXPECT_FALSE(t.error.empty());
  EXPECT_NO_THROW(t.validate());
}

TEST_F(AgentTest, ConnectFailureYieldsErrorTrajectory) {
  auto t = executor::run_agent(make_task("x"), launch_fixture("legacy"), scripted("always-final"));
  EXPECT_EQ(t.terminated, Termination::error);
  EXPECT_NE(t.error.find("unsupported protocol version"), std::string::npos);
  EXPECT_NO_THROW(t.validate());
}

TEST_F(AgentTest, ReplayIsIdenticalExceptTimestamps) {
  auto a = executor::run_agent(make_task("x", "echo"), launch_fixture("echo"), scripted("error-then-final"));
  auto b = executor::run_agent(make_task("x", "echo"), launch_fixture("echo"), scripted("error-then-final"));
  EXPECT_EQ(executor::timeless_json(a), executor::timeless_json(b));
}

verifier::VerifiedTask verified(taskgen::TaskSpec t, std::vector<protocol::ToolCall> gt) {
  verifier::VerifiedTask v;
  v.task = std::move(t);
  v.ground_truth_calls = std::move(gt);
  v.verified_by = "frontier";
  return v;
}

TEST_F(AgentTest, EvaluateModelPersistsAndResumes) {
  TempDir dir;
  std::vector<verifier::VerifiedTask> tasks = {
      verified(make_task("one"), {{"get_forecast", {{"city", "Paris"}, {"days", 3}}, "g"}}),
      verified(make_task("two"), {{"get_forecast", {{"city", "Paris"}}, "g"}}),
      verified(make_task("three", "echo"), {{"echo", {{"msg", "x"}}, "g"}})};
  std::map<std::string, protocol::ServerConfig> servers = {{"weather", launch_fixture("weather")},
                                                          {"echo", launch_fixture("echo")}};
  executor::EvalOptions opts;
  opts.out_dir = dir.path();
  opts.workers = 2;
  std::size_t progress = 0;
  opts.on_progress = [&] { ++progress; };
  auto model = scripted("call-then-final", "cand");
  auto records = executor::evaluate_model(tasks, servers, model, opts);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(progress, 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(records[i].verified.task.task_id, tasks[i].task.task_id);
  EXPECT_TRUE(records[2].candidate.calls[0].result.is_error);  // get_forecast is not an echo tool

  auto index = storage::read_jsonl(dir / executor::records_file("cand"));
  ASSERT_EQ(index.size(), 3u);
  EXPECT_EQ(index[0]["trajectory"], executor::candidate_trajectory_file(tasks[0].task.task_id, "cand"));
  const auto before = testing::slurp(dir / executor::records_file("cand"));
  const auto traj_before = testing::slurp(dir / index[0]["trajectory"].get<std::string>());

  std::vector<std::string> lines;
  events::ScopedSink sink([&](const std::string& l) { lines.push_back(l); });
  auto again = executor::evaluate_model(tasks, servers, model, opts);
  EXPECT_EQ(testing::slurp(dir / executor::records_file("cand")), before);
  EXPECT_EQ(testing::slurp(dir / index[0]["trajectory"].get<std::string>()), traj_before);
  bool reused_all = false;
  for (const auto& l : lines) reused_all |= l.find("\"executed\":0") != std::string::npos;
  EXPECT_TRUE(reused_all);

  auto loaded = executor::load_records(dir.path(), "cand", tasks);
  ASSERT_EQ(loaded.size(), 3u);
  EXPECT_EQ(executor::timeless_json(loaded[1].candidate), executor::timeless_json(records[1].candidate));
}

TEST_F(AgentTest, EvaluateModelPreconditions) {
  TempDir dir;
  executor::EvalOptions opts;
  opts.out_dir = dir.path();
  EXPECT_THROW(executor::evaluate_model({}, launch_fixture("echo"), scripted("always-final"), opts), PreconditionError);
  std::vector<verifier::VerifiedTask> tasks = {verified(make_task("x", "mars"), {{"f", json::object(), ""}})};
  std::map<std::string, protocol::ServerConfig> servers = {{"echo", launch_fixture("echo")}};
  EXPECT_THROW(executor::evaluate_model(tasks, servers, scripted("always-final"), opts), PreconditionError);
}

// --- verifier ---------------------------------------------------------------

executor::Trajectory with_calls(std::vector<bool> errors, Termination end) {
  executor::Trajectory t;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    protocol::ToolCall c{"f", json::object(), "c" + std::to_string(i)};
    t.calls.push_back({c, protocol::text_result(c.call_id, "r", errors[i])});
  }
  t.terminated = end;
  if (end == Termination::final) t.final_text = "ok";
  return t;
}

TEST(SuccessCriterion, ReportsFirstViolatedClause) {
  EXPECT_EQ(verifier::judge_success(with_calls({}, Termination::final)).clause, Clause::no_calls);
  EXPECT_EQ(verifier::judge_success(with_calls({false, true}, Termination::final)).clause, Clause::tool_error);
  EXPECT_EQ(verifier::judge_success(with_calls({true}, Termination::max_turns)).clause, Clause::tool_error);
  EXPECT_EQ(verifier::judge_success(with_calls({false}, Termination::max_turns)).clause, Clause::no_final);
  auto ok = verifier::judge_success(with_calls({false, false}, Termination::final));
  EXPECT_TRUE(ok.success);
  EXPECT_EQ(ok.clause, Clause::none);
  EXPECT_EQ(verifier::to_string(Clause::tool_error), "b");
}

TEST_F(AgentTest, VerifiesOnFirstTry) {
  auto out = verifier::verify_task(make_task("Paris for 3 days"), launch_fixture("weather"),
                                   scripted("frontier-solve", "frontier"), {});
  auto* v = std::get_if<verifier::VerifiedTask>(&out);
  ASSERT_NE(v, nullptr);
  EXPECT_EQ(v->attempts, 1);
  EXPECT_EQ(v->task.revision, 0);
  EXPECT_EQ(v->verified_by, "frontier");
  ASSERT_EQ(v->ground_truth_calls.size(), 1u);
  EXPECT_EQ(v->ground_truth_calls[0].arguments["city"], "Paris");
  EXPECT_NO_THROW(v->validate());
}

TEST_F(AgentTest, RefinesThenVerifies) {
  auto task = make_task("Check the weather for my trip next week.");
  auto out = verifier::verify_task(task, launch_fixture("weather"), scripted("frontier-fail-then-succeed"), {});
  auto* v = std::get_if<verifier::VerifiedTask>(&out);
  ASSERT_NE(v, nullptr);
  EXPECT_EQ(v->attempts, 2);
  EXPECT_EQ(v->task.revision, 1);
  EXPECT_EQ(v->task.task_id, task.task_id);
  EXPECT_EQ(v->task.instruction, "Check the 7-day weather forecast for Lisbon for my trip next week.");
  EXPECT_EQ(v->ground_truth_calls[0].arguments["days"], 7);
}

TEST_F(AgentTest, BudgetExhaustionRejectsWithEveryFailure) {
  auto out = verifier::verify_task(make_task("Trigger the failure tool.", "echo"), launch_fixture("echo"),
                                   scripted("frontier-always-fail"), {3});
  auto* r = std::get_if<verifier::RejectedTask>(&out);
  ASSERT_NE(r, nullptr);
  EXPECT_EQ(r->attempts, 3);
  ASSERT_EQ(r->failures.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(r->failures[i].revision, i);
    EXPECT_EQ(r->failures[i].clause, Clause::tool_error);
    ASSERT_TRUE(r->failures[i].trajectory.has_value());
    EXPECT_TRUE(r->failures[i].trajectory->calls[0].result.is_error);
  }
  EXPECT_EQ(r->task.revision, 2);
  EXPECT_EQ(r->failures[1].instruction, "Trigger the failure tool again.");
}

TEST_F(AgentTest, NoCallsIsAFailure) {
  auto out = verifier::verify_task(make_task("hello"), launch_fixture("weather"), scripted("frontier-no-calls"), {1});
  auto* r = std::get_if<verifier::RejectedTask>(&out);
  ASSERT_NE(r, nullptr);
  EXPECT_EQ(r->attempts, 1);
  EXPECT_EQ(r->failures[0].clause, Clause::no_calls);
  EXPECT_THROW(verifier::verify_task(make_task("x"), launch_fixture("weather"), scripted("frontier-solve"), {0}),
               PreconditionError);
}

TEST_F(AgentTest, UnreachableServerPropagates) {
  EXPECT_THROW(verifier::verify_task(make_task("x"), launch_fixture("silent"), scripted("frontier-solve"), {}),
               HandshakeTimeoutError);
}

TEST_F(AgentTest, RefinementPromptCarriesContext) {
  auto failed = with_calls({true}, Termination::final);
  auto verdict = verifier::judge_success(failed);
  std::vector<protocol::ToolSpec> tools = {{"get_forecast", "forecast", {{"required", {"city"}}}}};
  auto msgs = verifier::build_refinement_prompt(make_task("weather please"), failed, verdict, tools);
  const auto& u = msgs.back().text;
  EXPECT_EQ(u.rfind("Rewrite the task", 0), 0u);
  EXPECT_NE(u.find("weather please"), std::string::npos);
  EXPECT_NE(u.find("clause b"), std::string::npos);
  EXPECT_NE(u.find("get_forecast"), std::string::npos);
  EXPECT_NE(u.find("[error]"), std::string::npos);
}

TEST_F(AgentTest, VerifyTasksPersistsAndResumes) {
  TempDir dir;
  std::vector<taskgen::TaskSpec> tasks = {make_task("Paris for 3 days"), make_task("Trigger the failure tool.", "echo")};
  std::map<std::string, protocol::ServerConfig> servers = {{"weather", launch_fixture("weather")},
                                                          {"echo", launch_fixture("echo")}};
  // One script for both domains: the weather task succeeds, the echo task
  // calls an unknown tool on every revision.
  verifier::VerifyRunOptions opts;
  opts.out_dir = dir.path();
  opts.budget.max_attempts = 2;
  auto s = verifier::verify_tasks(tasks, servers, scripted("frontier-solve", "frontier"), opts);
  EXPECT_EQ(s.verified, 1u);
  EXPECT_EQ(s.rejected, 1u);
  EXPECT_EQ(s.skipped, 0u);

  auto v = verifier::load_verified(dir.path());
  ASSERT_EQ(v.size(), 1u);
  ASSERT_TRUE(v[0].trajectory.has_value());
  EXPECT_EQ(v[0].ground_truth_trajectory, verifier::verification_trajectory_file(tasks[0].task_id, "frontier", 0));

  auto rejected = storage::read_jsonl(dir / "rejected.jsonl");
  ASSERT_EQ(rejected.size(), 1u);
  auto r = rejected[0].get<verifier::RejectedTask>();
  EXPECT_EQ(r.failures.size(), 2u);
  for (const auto& f : r.failures) EXPECT_TRUE(std::filesystem::exists(dir / f.trajectory_file)) << f.trajectory_file;

  const auto before = testing::slurp(dir / "verified.jsonl") + testing::slurp(dir / "rejected.jsonl");
  auto again = verifier::verify_tasks(tasks, servers, scripted("frontier-solve", "frontier"), opts);
  EXPECT_EQ(again.skipped, 2u);
  EXPECT_EQ(testing::slurp(dir / "verified.jsonl") + testing::slurp(dir / "rejected.jsonl"), before);
}

TEST(VerifiedTask, ValidatesAgainstTrajectory) {
  verifier::VerifiedTask v;
  v.task = make_task("x");
  v.verified_by = "f";
  v.attempts = 1;
  auto t = with_calls({false}, Termination::final);
  t.messages = {gateway::ChatMessage::system("s"), gateway::ChatMessage::user("x"),
                gateway::ChatMessage::assistant("", {t.calls[0].call}), gateway::ChatMessage::tool("c0", "r"),
                gateway::ChatMessage::assistant("ok")};
  v.trajectory = t;
  v.ground_truth_calls = t.call_sequence();
  EXPECT_NO_THROW(v.validate());
  v.ground_truth_calls.clear();
  EXPECT_THROW(v.validate(), PreconditionError);
  v.ground_truth_calls = t.call_sequence();
  v.attempts = 0;
  EXPECT_THROW(v.validate(), PreconditionError);
  auto back = json(v).get<verifier::VerifiedTask>();
  EXPECT_EQ(back.ground_truth_calls, v.ground_truth_calls);
  EXPECT_FALSE(back.trajectory.has_value());
}

}  // namespace
}  // namespace mcpeval
