#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mcpeval/error.hpp"
#include "mcpeval/matcher.hpp"
#include "oracles.hpp"

namespace mcpeval::matcher {
namespace {

using testing::CallGenerator;

ToolCall call(std::string name, json args = json::object()) { return {std::move(name), std::move(args), ""}; }

TEST(Canonicalize, SortsTrimsFoldsAndNormalizesNumbers) {
  json in = json::parse(R"({"b": "  Paris ", "a": [3.0, 2.5, "X"], "c": {"z": true, "y": null}})");
  json out = canonicalize(in);
  EXPECT_EQ(out.dump(), R"({"a":[3,2.5,"x"],"b":"paris","c":{"y":null,"z":true}})");
  EXPECT_TRUE(out["a"][0].is_number_integer());
}

TEST(Lcs, MatchesSubsequenceEnumeration) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(0, 9), ch(0, 2);
  for (int i = 0; i < 400; ++i) {
    std::string a, b;
    for (int k = len(rng); k > 0; --k) a.push_back(static_cast<char>('a' + ch(rng)));
    for (int k = len(rng); k > 0; --k) b.push_back(static_cast<char>('a' + ch(rng)));
    ASSERT_EQ(lcs_length(a, b), testing::brute_lcs(a, b)) << a << " / " << b;
  }
}

TEST(Lcs, CountsCodePointsNotBytes) {
  EXPECT_EQ(lcs_length("h\xc3\xa9llo", "hello"), 4u);
  EXPECT_DOUBLE_EQ(string_similarity("h\xc3\xa9llo", "hello"), 0.8);
}

TEST(StringSimilarity, Examples) {
  EXPECT_DOUBLE_EQ(string_similarity("", ""), 1.0);
  EXPECT_DOUBLE_EQ(string_similarity("abc", ""), 0.0);
  EXPECT_DOUBLE_EQ(string_similarity("abc", "abd"), 2.0 * 2 / 6);
  EXPECT_DOUBLE_EQ(string_similarity("kitten", "sitting"), 2.0 * 4 / 13);
}

TEST(ValueSimilarity, NumbersUseRelativeTolerance) {
  MatchConfig cfg;
  EXPECT_EQ(value_similarity(1.0, 1.0 + 1e-10, cfg), 1.0);
  EXPECT_EQ(value_similarity(1.0, 1.001, cfg), 0.0);
  EXPECT_EQ(value_similarity(3, 3.0, cfg), 1.0);
  EXPECT_EQ(value_similarity(0, 0.0, cfg), 1.0);
  EXPECT_EQ(value_similarity(true, false, cfg), 0.0);
  EXPECT_EQ(value_similarity("3", 3, cfg), 0.0);
}

TEST(ValueSimilarity, ArraysComparePositionally) {
  MatchConfig cfg;
  EXPECT_DOUBLE_EQ(value_similarity(json{1, 2, 3}, json{1, 2}, cfg), 2.0 / 3);
  EXPECT_DOUBLE_EQ(value_similarity(json::array(), json::array(), cfg), 1.0);
}

TEST(ArgumentSimilarity, MeanOverKeyUnion) {
  MatchConfig cfg;
  std::map<std::string, double> per;
  double s = argument_similarity({{"a", 1}, {"b", 2}}, {{"a", 1}, {"c", 2}}, cfg, &per);
  EXPECT_DOUBLE_EQ(s, 1.0 / 3);
  EXPECT_EQ(per.size(), 3u);
  EXPECT_EQ(per["a"], 1.0);
  EXPECT_EQ(per["c"], 0.0);
  EXPECT_EQ(argument_similarity(json::object(), json::object(), cfg), 1.0);
}

TEST(Assignment, ExhaustiveMatchesPermutationOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 5), coarse(0, 4);
  std::uniform_real_distribution<double> fine(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    std::vector<std::vector<double>> sim(dim(rng), std::vector<double>(dim(rng)));
    for (auto& row : sim) {
      for (auto& v : row) v = i % 2 ? coarse(rng) / 4.0 : fine(rng);  // ties on odd cases
    }
    auto a = assign_exhaustive(sim);
    ASSERT_EQ(a.total, testing::brute_assignment_total(sim));
    ASSERT_EQ(a.pairs.size(), std::min(sim.size(), sim.front().size()));
  }
}

TEST(Assignment, TiesResolveToFirstOptimum) {
  auto a = assign_exhaustive({{1, 1}, {1, 1}});
  ASSERT_EQ(a.pairs.size(), 2u);
  EXPECT_EQ(a.pairs[0], std::make_pair(std::size_t{0}, std::size_t{0}));
  EXPECT_EQ(a.pairs[1], std::make_pair(std::size_t{1}, std::size_t{1}));
}

TEST(Assignment, GreedyCanBeSuboptimal) {
  std::vector<std::vector<double>> sim = {{0.9, 0.8}, {0.8, 0.0}};
  EXPECT_DOUBLE_EQ(assign_greedy(sim).total, 0.9);
  EXPECT_DOUBLE_EQ(assign_exhaustive(sim).total, 1.6);
}

TEST(Assignment, RejectsRaggedMatrix) {
  EXPECT_THROW(assign_exhaustive({{1, 2}, {1}}), PreconditionError);
  EXPECT_TRUE(assign_exhaustive({}).pairs.empty());
}

TEST(AlignCalls, GroupTotalsMatchOracle) {
  CallGenerator gen(23);
  MatchConfig cfg;
  const std::vector<std::string> names = {"a", "b"};
  for (int i = 0; i < 300; ++i) {
    auto gt = gen.sequence(1, 6, names);
    auto pred = gen.sequence(0, 6, names);
    auto pairs = align_calls(gt, pred, cfg);
    for (const auto& name : names) {
      std::vector<std::size_t> gi, pj;
      for (std::size_t k = 0; k < gt.size(); ++k) if (gt[k].tool_name == name) gi.push_back(k);
      for (std::size_t k = 0; k < pred.size(); ++k) if (pred[k].tool_name == name) pj.push_back(k);
      if (gi.empty() || pj.empty()) continue;
      std::vector<std::vector<double>> sim(gi.size(), std::vector<double>(pj.size()));
      for (std::size_t r = 0; r < gi.size(); ++r)
        for (std::size_t c = 0; c < pj.size(); ++c)
          sim[r][c] = argument_similarity(gt[gi[r]].arguments, pred[pj[c]].arguments, cfg);
      double got = 0.0;
      std::size_t n = 0;
      for (const auto& p : pairs) {
        if (p.tool_name != name) continue;
        got += p.param_similarity;
        ++n;
      }
      ASSERT_EQ(n, std::min(gi.size(), pj.size()));
      ASSERT_NEAR(got, testing::brute_assignment_total(sim), 1e-12);
    }
  }
}

TEST(OrderScore, LongestIncreasingRunOverPairs) {
  auto pair = [](std::size_t g, std::size_t p) {
    CallMatch m;
    m.gt_index = g;
    m.pred_index = p;
    return m;
  };
  std::vector<CallMatch> none;
  EXPECT_EQ(order_score(none), 0.0);
  std::vector<CallMatch> one = {pair(3, 0)};
  EXPECT_EQ(order_score(one), 1.0);
  std::vector<CallMatch> rev = {pair(0, 2), pair(1, 1), pair(2, 0)};
  EXPECT_DOUBLE_EQ(order_score(rev), 1.0 / 3);
  std::vector<CallMatch> mixed = {pair(0, 1), pair(1, 0), pair(2, 2), pair(3, 3)};
  EXPECT_DOUBLE_EQ(order_score(mixed), 0.75);
}

TEST(ScoreTask, SingleCallWithNearMissArgument) {
  std::vector<ToolCall> gt = {call("f", {{"x", "abc"}})};
  std::vector<ToolCall> pred = {call("f", {{"x", "abd"}})};
  auto r = score_task(gt, pred);
  EXPECT_EQ(r.name_score, 1.0);
  EXPECT_DOUBLE_EQ(r.param_score, 2.0 / 3);
  EXPECT_EQ(r.order_score, 1.0);
  EXPECT_DOUBLE_EQ(r.overall_score, 0.4 + 0.4 * 2.0 / 3 + 0.2);
  EXPECT_FALSE(r.strict_pass);
  EXPECT_TRUE(r.flex_pass);
  ASSERT_EQ(r.param_mismatches.size(), 1u);
  EXPECT_EQ(r.param_mismatches[0].param, "x");
  EXPECT_EQ(r.param_mismatches[0].gt_value, "abc");
}

TEST(ScoreTask, SwappedPairIsFlexButNotStrict) {
  std::vector<ToolCall> gt = {call("a"), call("b")};
  std::vector<ToolCall> pred = {call("b"), call("a")};
  auto r = score_task(gt, pred);
  EXPECT_EQ(r.order_score, 0.5);
  EXPECT_DOUBLE_EQ(r.overall_score, 0.9);
  EXPECT_FALSE(r.strict_pass);
  EXPECT_TRUE(r.flex_pass);
}

TEST(ScoreTask, ReversedTripleFailsFlexOnOrder) {
  std::vector<ToolCall> gt = {call("a"), call("b"), call("c")};
  std::vector<ToolCall> pred = {call("c"), call("b"), call("a")};
  auto r = score_task(gt, pred);
  EXPECT_DOUBLE_EQ(r.order_score, 1.0 / 3);
  EXPECT_FALSE(r.flex_pass);
}

TEST(ScoreTask, MissingCallLowersNameAndParam) {
  std::vector<ToolCall> gt = {call("a", {{"k", 1}}), call("a", {{"k", 2}})};
  std::vector<ToolCall> pred = {call("a", {{"k", 2}})};
  auto r = score_task(gt, pred);
  EXPECT_EQ(r.name_score, 0.5);
  EXPECT_EQ(r.param_score, 0.5);
  EXPECT_EQ(r.order_score, 1.0);
  EXPECT_DOUBLE_EQ(r.overall_score, 0.6);
  EXPECT_FALSE(r.flex_pass);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].gt_index, 1u);
  ASSERT_EQ(r.missing_tools.size(), 1u);
  EXPECT_EQ(r.missing_tools[0].count, 1u);
}

TEST(ScoreTask, ExtraCallsCountAgainstNameScore) {
  std::vector<ToolCall> gt = {call("a")};
  std::vector<ToolCall> pred = {call("a"), call("z"), call("z")};
  auto r = score_task(gt, pred);
  EXPECT_DOUBLE_EQ(r.name_score, 1.0 / 3);
  EXPECT_TRUE(r.flex_pass);
  ASSERT_EQ(r.extra_tools.size(), 1u);
  EXPECT_EQ(r.extra_tools[0].name, "z");
  EXPECT_EQ(r.extra_tools[0].count, 2u);
}

TEST(ScoreTask, EmptyPredictionScoresZero) {
  std::vector<ToolCall> gt = {call("a")};
  auto r = score_task(gt, {});
  EXPECT_EQ(r.overall_score, 0.0);
  EXPECT_FALSE(r.strict_pass);
  EXPECT_FALSE(r.flex_pass);
}

TEST(ScoreTask, EmptyGroundTruthIsRejected) {
  std::vector<ToolCall> pred = {call("a")};
  EXPECT_THROW(score_task({}, pred), PreconditionError);
}

TEST(ScoreTask, CanonicalizationCanBeDisabled) {
  std::vector<ToolCall> gt = {call("f", {{"city", "Paris"}})};
  std::vector<ToolCall> pred = {call("f", {{"city", " paris"}})};
  EXPECT_TRUE(score_task(gt, pred).strict_pass);
  MatchConfig raw;
  raw.canonicalize = false;
  EXPECT_FALSE(score_task(gt, pred, raw).strict_pass);
}

TEST(ScoreTask, IdentityIsPerfect) {
  CallGenerator gen(5);
  for (int i = 0; i < 200; ++i) {
    auto t = gen.sequence(1, 7, {"a", "b", "c"});
    auto r = score_task(t, t);
    ASSERT_EQ(r.name_score, 1.0);
    ASSERT_EQ(r.param_score, 1.0);
    ASSERT_EQ(r.order_score, 1.0);
    ASSERT_DOUBLE_EQ(r.overall_score, 1.0);
    ASSERT_TRUE(r.strict_pass);
    ASSERT_TRUE(r.flex_pass);
  }
}

TEST(ScoreTask, StrictImpliesFlexAndScoresStayInRange) {
  CallGenerator gen(99);
  const std::vector<std::string> names = {"a", "b", "c"};
  for (int i = 0; i < 500; ++i) {
    auto gt = gen.sequence(1, 6, names);
    auto r = score_task(gt, gen.perturb(gt, names));
    if (r.strict_pass) ASSERT_TRUE(r.flex_pass);
    for (double s : {r.name_score, r.param_score, r.order_score, r.overall_score}) {
      ASSERT_GE(s, 0.0);
      ASSERT_LE(s, 1.0);
    }
  }
}

TEST(FlexVerdict, ThresholdsAreInclusive) {
  MatchConfig cfg;
  const double at = 0.6, below = std::nextafter(0.6, 0.0);
  EXPECT_TRUE(flex_verdict(std::vector<double>{at}, 1, 0.5, cfg));
  EXPECT_FALSE(flex_verdict(std::vector<double>{below}, 1, 0.5, cfg));
  EXPECT_FALSE(flex_verdict(std::vector<double>{at}, 1, std::nextafter(0.5, 0.0), cfg));
  EXPECT_FALSE(flex_verdict(std::vector<double>{1.0}, 2, 1.0, cfg));
}

TEST(FlexVerdict, ParamBoundaryThroughScoreTask) {
  // Three of five keys equal: similarity exactly 3/5.
  json gt_args = {{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}, {"e", 1}};
  json at = {{"a", 1}, {"b", 1}, {"c", 1}, {"d", 2}, {"e", 2}};
  json below = {{"a", 1}, {"b", 1}, {"c", 2}, {"d", 2}, {"e", 2}};
  std::vector<ToolCall> gt = {call("f", gt_args)};
  std::vector<ToolCall> p1 = {call("f", at)};
  std::vector<ToolCall> p2 = {call("f", below)};
  EXPECT_EQ(score_task(gt, p1).param_score, 0.6);
  EXPECT_TRUE(score_task(gt, p1).flex_pass);
  EXPECT_FALSE(score_task(gt, p2).flex_pass);
}

TEST(OverallScore, IsTheWeightedSum) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    MatchConfig cfg;
    cfg.w_name = u(rng) * 0.5;
    cfg.w_param = u(rng) * 0.5;
    cfg.w_order = 1.0 - cfg.w_name - cfg.w_param;
    double n = u(rng), p = u(rng), o = u(rng);
    ASSERT_NEAR(overall_score(n, p, o, cfg), cfg.w_name * n + cfg.w_param * p + cfg.w_order * o, 1e-12);
  }
}

TEST(MatchConfig, Validation) {
  MatchConfig c;
  EXPECT_NO_THROW(c.validate());
  c.w_name = 0.5;
  EXPECT_THROW(c.validate(), PreconditionError);
  c = {};
  c.param_threshold = 1.5;
  EXPECT_THROW(c.validate(), PreconditionError);
  c = {};
  c.w_order = -0.1;
  c.w_name = 0.5;
  c.w_param = 0.6;
  EXPECT_THROW(c.validate(), PreconditionError);
}

TEST(MatchConfig, JsonDefaults) {
  MatchConfig c = json::parse(R"({"param_threshold": 0.7})").get<MatchConfig>();
  EXPECT_EQ(c.param_threshold, 0.7);
  EXPECT_EQ(c.w_name, 0.4);
  EXPECT_EQ(json(c).get<MatchConfig>().param_threshold, 0.7);
}

TEST(TaskMatchReport, JsonRoundTrip) {
  std::vector<ToolCall> gt = {call("a", {{"k", "x"}}), call("b")};
  std::vector<ToolCall> pred = {call("a", {{"k", "y"}}), call("c")};
  auto r = score_task(gt, pred);
  auto back = json(r).get<TaskMatchReport>();
  EXPECT_EQ(json(back).dump(), json(r).dump());
}

TEST(ToolSuccessRates, CountsAcrossReports) {
  std::vector<ToolCall> gt = {call("a"), call("b")};
  std::vector<ToolCall> p1 = {call("a")};
  std::vector<ToolCall> p2 = {call("a"), call("b"), call("c")};
  std::vector<TaskMatchReport> reports = {score_task(gt, p1), score_task(gt, p2)};
  auto stats = tool_success_rates(reports);
  ASSERT_EQ(stats.size(), 3u);
  EXPECT_EQ(stats[0].tool, "a");
  EXPECT_EQ(stats[0].pair_rate, 1.0);
  EXPECT_EQ(stats[1].tool, "b");
  EXPECT_EQ(stats[1].times_in_gt, 2u);
  EXPECT_EQ(stats[1].pair_rate, 0.5);
  EXPECT_EQ(stats[2].tool, "c");
  EXPECT_EQ(stats[2].times_in_gt, 0u);
  EXPECT_EQ(stats[2].times_predicted, 1u);
}

}  // namespace
}  // namespace mcpeval::matcher
