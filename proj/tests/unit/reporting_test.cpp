#include <gtest/gtest.h>

#include <cmath>

#include "mcpeval/reporting.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace mcpeval::reporting {
namespace {

using testing::uniform_scores;

ScoredRecord rec(std::string model, std::string domain, double overall, bool strict, bool flex,
                 std::optional<std::pair<double, double>> judged = std::nullopt) {
  ScoredRecord r;
  r.model_id = std::move(model);
  r.domain = std::move(domain);
  r.task_id = r.domain + "-" + std::to_string(overall);
  r.final_answer = true;
  r.match.overall_score = overall;
  r.match.name_score = r.match.param_score = r.match.order_score = overall;
  r.match.strict_pass = strict;
  r.match.flex_pass = flex;
  if (judged) r.judge = judge::JudgeVerdict::from_scores(uniform_scores(judged->first, judged->second), "j", "h");
  return r;
}

TEST(Describe, SampleStandardDeviation) {
  std::vector<double> v = {0.5, 0.7, 0.9};
  auto s = describe(v);
  EXPECT_DOUBLE_EQ(s.mean, 0.7);
  EXPECT_NEAR(s.std, 0.2, 1e-15);
  EXPECT_EQ(s.n, 3u);
  std::vector<double> one = {0.4};
  auto single = describe(one);
  EXPECT_TRUE(single.single_sample());
  EXPECT_EQ(single.std, 0.0);
  EXPECT_EQ(describe({}).n, 0u);
}

TEST(Pearson, PerfectLinearRelation) {
  std::vector<double> x = {0.1, 0.4, 0.2, 0.9};
  EXPECT_DOUBLE_EQ(pearson(x, x), 1.0);
  std::vector<double> neg = {-0.1, -0.4, -0.2, -0.9};
  EXPECT_DOUBLE_EQ(pearson(x, neg), -1.0);
  EXPECT_EQ(pearson_p_value(1.0, 4), 0.0);
}

TEST(Pearson, HandComputedFivePoints) {
  // dx = (-2,-1,0,1,2), dy = (-2,0,1,0,1): Sxy = 6, Sxx = 10, Syy = 6.
  std::vector<double> x = {1, 2, 3, 4, 5}, y = {2, 4, 5, 4, 5};
  EXPECT_NEAR(pearson(x, y), 6.0 / std::sqrt(60.0), 1e-9);
  EXPECT_NEAR(pearson(x, y), testing::direct_pearson(x, y), 1e-12);
  // Reference value from an independent statistics package.
  EXPECT_NEAR(pearson_p_value(pearson(x, y), 5), 0.1240270626575546, 1e-9);
}

TEST(Pearson, MatchesDirectFormulaOnRandomData) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> x(3 + i % 20), y(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      x[k] = u(rng);
      y[k] = 0.5 * x[k] + u(rng);
    }
    ASSERT_NEAR(pearson(x, y), testing::direct_pearson(x, y), 1e-12);
    ASSERT_NEAR(pearson(x, y), pearson(y, x), 1e-15);
    // Invariant under positive affine maps.
    std::vector<double> ax(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) ax[k] = 3.0 * x[k] + 2.0;
    ASSERT_NEAR(pearson(ax, y), pearson(x, y), 1e-12);
  }
}

TEST(Pearson, UndefinedCases) {
  std::vector<double> c = {0.5, 0.5, 0.5}, x = {0.1, 0.2, 0.3};
  try {
    pearson(c, x, "flat", "x");
    FAIL() << "expected AnalysisError";
  } catch (const AnalysisError& e) {
    EXPECT_NE(std::string(e.what()).find("flat"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("zero variance"), std::string::npos);
  }
  std::vector<double> two = {0.1, 0.2};
  EXPECT_THROW(pearson(two, two), AnalysisError);
  std::vector<double> four = {0.1, 0.2, 0.3, 0.4};
  EXPECT_THROW(pearson(x, four), AnalysisError);
}

TEST(Aggregate, EmptyInputIsAnError) { EXPECT_THROW(aggregate({}), AnalysisError); }

TEST(Aggregate, ReproducesPublishedGap) {
  std::vector<ScoredRecord> records;
  for (int i = 0; i < 4; ++i) records.push_back(rec("m", "d" + std::to_string(i % 2), 0.5, false, true, {{0.839, 0.774}}));
  auto rep = aggregate(records);
  ASSERT_TRUE(rep.overall.gap.has_value());
  EXPECT_NEAR(rep.overall.trajectory->mean, 0.839, 1e-12);
  EXPECT_NEAR(rep.overall.completion->mean, 0.774, 1e-12);
  EXPECT_NEAR(*rep.overall.gap, 0.065, 1e-9);
  EXPECT_NEAR(*rep.model_summaries[0].gap, 0.065, 1e-9);
}

TEST(Aggregate, ModelAverageIsUnweightedOverDomains) {
  std::vector<ScoredRecord> records = {rec("m", "a", 1.0, true, true), rec("m", "b", 0.0, false, false),
                                       rec("m", "b", 0.0, false, false), rec("m", "b", 0.0, false, false)};
  auto rep = aggregate(records);
  ASSERT_EQ(rep.model_summaries.size(), 1u);
  const auto& ms = rep.model_summaries[0];
  EXPECT_DOUBLE_EQ(ms.overall, 0.5);
  EXPECT_DOUBLE_EQ(ms.strict_rate, 0.5);
  EXPECT_EQ(ms.n_tasks, 4u);
  EXPECT_DOUBLE_EQ(rep.overall.overall.mean, 0.25);  // pooled
  EXPECT_FALSE(ms.trajectory.has_value());
}

TEST(Aggregate, CellsAreSortedAndAddressable) {
  std::vector<ScoredRecord> records = {rec("z", "b", 0.2, false, false), rec("a", "b", 0.4, false, true),
                                       rec("a", "a", 0.6, true, true)};
  auto rep = aggregate(records);
  EXPECT_EQ(rep.models, (std::vector<std::string>{"a", "z"}));
  EXPECT_EQ(rep.domains, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(rep.cells.size(), 3u);
  EXPECT_EQ(rep.cells[0].model_id, "a");
  EXPECT_EQ(rep.cells[0].domain, "a");
  EXPECT_EQ(rep.cell("z", "a"), nullptr);
  ASSERT_NE(rep.cell("a", "b"), nullptr);
  EXPECT_DOUBLE_EQ(rep.cell("a", "b")->flex_rate, 1.0);
  EXPECT_EQ(rep.rankings[0].metric, "overall");
  EXPECT_EQ(rep.rankings[0].order[0].first, "a");
}

TEST(Aggregate, SingleRecordCellHasZeroStd) {
  std::vector<ScoredRecord> records = {rec("m", "d", 0.7, true, true, {{0.9, 0.5}})};
  auto rep = aggregate(records);
  EXPECT_TRUE(rep.cells[0].overall.single_sample());
  EXPECT_EQ(rep.cells[0].trajectory->std, 0.0);
  EXPECT_FALSE(rep.correlations.errors.empty());  // one cell cannot be correlated
}

TEST(Aggregate, FlexRateNeverBelowStrictRate) {
  testing::CallGenerator gen(41);
  const std::vector<std::string> names = {"a", "b"};
  std::vector<ScoredRecord> records;
  for (int i = 0; i < 200; ++i) {
    auto gt = gen.sequence(1, 4, names);
    ScoredRecord r;
    r.model_id = i % 2 ? "m1" : "m2";
    r.domain = i % 3 ? "x" : "y";
    r.match = matcher::score_task(gt, gen.perturb(gt, names));
    records.push_back(std::move(r));
  }
  auto rep = aggregate(records);
  for (const auto& c : rep.cells) EXPECT_GE(c.flex_rate, c.strict_rate);
  for (const auto& m : rep.model_summaries) EXPECT_GE(m.flex_rate, m.strict_rate);
}

TEST(Correlate, FourPairingsOverJudgedCells) {
  std::vector<ScoredRecord> records = {
      rec("m", "a", 0.2, false, false, {{0.3, 0.2}}), rec("m", "b", 0.5, false, true, {{0.6, 0.5}}),
      rec("m", "c", 0.9, true, true, {{0.7, 0.8}}), rec("n", "a", 0.4, false, true, {{0.5, 0.6}})};
  auto rep = aggregate(records);
  EXPECT_TRUE(rep.correlations.errors.empty());
  auto block = correlate(rep);
  ASSERT_EQ(block.pairs.size(), 4u);
  EXPECT_EQ(block.pairs[0].x, "tool_call_overall");
  EXPECT_EQ(block.pairs[0].y, "judge_combined");
  EXPECT_EQ(block.pairs[3].x, "judge_trajectory");
  EXPECT_EQ(block.pairs[3].y, "judge_completion");
  std::vector<double> overall = {0.2, 0.5, 0.9, 0.4}, traj = {0.3, 0.6, 0.7, 0.5};
  EXPECT_NEAR(block.pairs[1].r, testing::direct_pearson(overall, traj), 1e-12);
  EXPECT_NEAR(block.pairs[1].r, 0.928190961784514, 1e-9);
  EXPECT_NEAR(block.pairs[1].p_value, 0.0718090382154859, 1e-9);
}

TEST(Correlate, ConstantSeriesRaises) {
  std::vector<ScoredRecord> records = {rec("m", "a", 0.5, false, false, {{0.3, 0.2}}),
                                       rec("m", "b", 0.5, false, true, {{0.6, 0.5}}),
                                       rec("m", "c", 0.5, true, true, {{0.7, 0.8}})};
  auto rep = aggregate(records);
  EXPECT_EQ(rep.correlations.errors.size(), 3u);
  EXPECT_THROW(correlate(rep), AnalysisError);
}

TEST(Render, FormatsRatesAndScores) {
  EXPECT_EQ(format_rate(0.839), "83.9%");
  EXPECT_EQ(format_rate(1.0), "100.0%");
  EXPECT_EQ(format_score(0.8389), "0.839");
  EXPECT_EQ(format_score(0.0), "0.000");
}

TEST(Render, MarkdownShowsAbsentJudgeData) {
  std::vector<ScoredRecord> records = {rec("m", "a", 0.6, true, true), rec("m", "b", 0.2, false, false)};
  auto md = render(aggregate(records), Format::markdown);
  EXPECT_NE(md.find("Strict"), std::string::npos);
  EXPECT_NE(md.find("Flex"), std::string::npos);
  EXPECT_NE(md.find("—"), std::string::npos);
  EXPECT_NE(md.find("100.0%"), std::string::npos);
}

TEST(Render, IsDeterministic) {
  std::vector<ScoredRecord> records = {rec("m", "a", 0.2, false, false, {{0.3, 0.2}}),
                                       rec("m", "b", 0.5, false, true, {{0.6, 0.5}}),
                                       rec("n", "a", 0.9, true, true, {{0.7, 0.8}})};
  EXPECT_EQ(render(aggregate(records), Format::markdown), render(aggregate(records), Format::markdown));
  auto j = json::parse(render(aggregate(records), Format::json));
  EXPECT_EQ(j["report_schema"], kReportSchema);
  EXPECT_EQ(j["metadata"]["average_weighting"], "unweighted mean over domains");
}

TEST(ScoredRecord, JsonRoundTrip) {
  auto r = rec("m", "a", 0.25, false, true, {{0.8, 0.6}});
  auto back = json(r).get<ScoredRecord>();
  EXPECT_EQ(json(back).dump(), json(r).dump());
  auto bare = rec("m", "a", 0.25, false, true);
  EXPECT_FALSE(json(bare).get<ScoredRecord>().judge.has_value());
}

}  // namespace
}  // namespace mcpeval::reporting
