#include "mcpeval/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

namespace mcpeval::reporting {
namespace {

double mean(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double mean_of(const std::vector<double>& v) { return mean(std::span<const double>(v)); }

json stat_json(const Stat& s) { return json{{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }

json opt_stat_json(const std::optional<Stat>& s) { return s ? stat_json(*s) : json(nullptr); }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

Stat describe(std::span<const double> values) {
  Stat s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = mean(values);
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

void to_json(json& j, const ScoredRecord& r) {
  j = json{{"model_id", r.model_id},
           {"domain", r.domain},
           {"task_id", r.task_id},
           {"final_answer", r.final_answer},
           {"match", r.match},
           {"judge", r.judge ? json(*r.judge) : json(nullptr)}};
}

void from_json(const json& j, ScoredRecord& r) {
  r.model_id = j.at("model_id").get<std::string>();
  r.domain = j.at("domain").get<std::string>();
  r.task_id = j.value("task_id", std::string());
  r.final_answer = j.value("final_answer", false);
  r.match = j.at("match").get<matcher::TaskMatchReport>();
  if (j.contains("judge") && !j["judge"].is_null()) r.judge = j["judge"].get<judge::JudgeVerdict>();
  else r.judge.reset();
}

const DomainSummary* RunReport::cell(const std::string& model, const std::string& domain) const {
  for (const auto& c : cells)
    if (c.model_id == model && c.domain == domain) return &c;
  return nullptr;
}

double pearson(std::span<const double> x, std::span<const double> y, const std::string& x_name,
               const std::string& y_name) {
  if (x.size() != y.size()) throw AnalysisError("pearson: series lengths differ");
  if (x.size() < 3) {
    throw AnalysisError("correlation of " + x_name + " vs " + y_name + " needs at least 3 points, got " +
                        std::to_string(x.size()));
  }
  double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw AnalysisError("undefined correlation: series " + x_name + " has zero variance");
  if (syy == 0.0) throw AnalysisError("undefined correlation: series " + y_name + " has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson_p_value(double r, std::size_t n) {
  if (n < 3) return 1.0;
  if (std::abs(r) >= 1.0) return 0.0;
  double dof = static_cast<double>(n - 2);
  double t = r * std::sqrt(dof / (1.0 - r * r));
  boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

namespace {

CorrelationBlock compute_correlations(const RunReport& report) {
  std::vector<double> overall, combined, traj, comp;
  for (const auto& c : report.cells) {
    if (!c.trajectory || !c.completion) continue;
    overall.push_back(c.overall.mean);
    traj.push_back(c.trajectory->mean);
    comp.push_back(c.completion->mean);
    combined.push_back((c.trajectory->mean + c.completion->mean) / 2.0);
  }
  struct Pairing {
    const char* x_name;
    const std::vector<double>* x;
    const char* y_name;
    const std::vector<double>* y;
  };
  const Pairing pairings[] = {{"tool_call_overall", &overall, "judge_combined", &combined},
                              {"tool_call_overall", &overall, "judge_trajectory", &traj},
                              {"tool_call_overall", &overall, "judge_completion", &comp},
                              {"judge_trajectory", &traj, "judge_completion", &comp}};
  CorrelationBlock block;
  for (const auto& p : pairings) {
    try {
      double r = pearson(*p.x, *p.y, p.x_name, p.y_name);
      block.pairs.push_back({p.x_name, p.y_name, p.x->size(), r, pearson_p_value(r, p.x->size())});
    } catch (const AnalysisError& e) {
      block.errors.push_back(e.what());
    }
  }
  return block;
}

std::vector<Ranking> rank_models(const std::vector<ModelSummary>& models) {
  auto rank = [&](const std::string& metric, auto get) {
    Ranking r{metric, {}};
    for (const auto& m : models)
      if (auto v = get(m)) r.order.emplace_back(m.model_id, *v);
    std::stable_sort(r.order.begin(), r.order.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return r;
  };
  std::vector<Ranking> out;
  out.push_back(rank("overall", [](const ModelSummary& m) { return std::optional<double>(m.overall); }));
  out.push_back(rank("strict_rate", [](const ModelSummary& m) { return std::optional<double>(m.strict_rate); }));
  out.push_back(rank("flex_rate", [](const ModelSummary& m) { return std::optional<double>(m.flex_rate); }));
  auto combined = rank("judge_combined", [](const ModelSummary& m) { return m.combined; });
  if (!combined.order.empty()) out.push_back(std::move(combined));
  return out;
}

}  // namespace

CorrelationBlock correlate(const RunReport& report) {
  auto block = compute_correlations(report);
  if (!block.errors.empty()) throw AnalysisError(block.errors.front());
  return block;
}

RunReport aggregate(std::span<const ScoredRecord> records, json metadata) {
  if (records.empty()) throw AnalysisError("no records to aggregate");
  RunReport rep;
  std::set<std::string> models, domains;
  for (const auto& r : records) {
    models.insert(r.model_id);
    domains.insert(r.domain);
  }
  rep.models.assign(models.begin(), models.end());
  rep.domains.assign(domains.begin(), domains.end());

  std::vector<double> all_overall, all_traj, all_comp;
  for (const auto& r : records) {
    all_overall.push_back(r.match.overall_score);
    if (r.judge) {
      all_traj.push_back(r.judge->trajectory_score);
      all_comp.push_back(r.judge->completion_score);
    }
  }
  rep.overall.n_records = records.size();
  rep.overall.n_judged = all_traj.size();
  rep.overall.overall = describe(all_overall);
  if (!all_traj.empty()) {
    rep.overall.trajectory = describe(all_traj);
    rep.overall.completion = describe(all_comp);
    rep.overall.gap = rep.overall.trajectory->mean - rep.overall.completion->mean;
  }

  for (const auto& model : rep.models) {
    ModelSummary ms;
    ms.model_id = model;
    std::vector<double> strict, flex, success, name, param, order, overall, traj, comp;
    ModelDiagnostics diag;
    diag.model_id = model;
    std::vector<matcher::TaskMatchReport> model_reports;

    for (const auto& domain : rep.domains) {
      std::vector<const ScoredRecord*> in_cell;
      for (const auto& r : records)
        if (r.model_id == model && r.domain == domain) in_cell.push_back(&r);
      if (in_cell.empty()) continue;

      DomainSummary c;
      c.domain = domain;
      c.model_id = model;
      c.n_tasks = in_cell.size();
      std::vector<double> v_name, v_param, v_order, v_overall, v_traj, v_comp;
      std::map<std::string, std::vector<double>> v_aspects;
      std::size_t n_strict = 0, n_flex = 0, n_final = 0;
      for (const auto* r : in_cell) {
        n_strict += r->match.strict_pass;
        n_flex += r->match.flex_pass;
        n_final += r->final_answer;
        v_name.push_back(r->match.name_score);
        v_param.push_back(r->match.param_score);
        v_order.push_back(r->match.order_score);
        v_overall.push_back(r->match.overall_score);
        if (r->judge) {
          v_traj.push_back(r->judge->trajectory_score);
          v_comp.push_back(r->judge->completion_score);
          for (const auto& [k, a] : r->judge->scores.aspects) v_aspects[k].push_back(a.score);
        }
        model_reports.push_back(r->match);
        for (const auto& m : r->match.missing_tools) diag.missing_tools[m.name] += m.count;
        for (const auto& m : r->match.extra_tools) diag.extra_tools[m.name] += m.count;
        for (const auto& p : r->match.param_mismatches) diag.param_mismatches[p.tool + "." + p.param] += 1;
      }
      double n = static_cast<double>(c.n_tasks);
      c.strict_rate = static_cast<double>(n_strict) / n;
      c.flex_rate = static_cast<double>(n_flex) / n;
      c.success_rate = static_cast<double>(n_final) / n;
      c.name = describe(v_name);
      c.param = describe(v_param);
      c.order = describe(v_order);
      c.overall = describe(v_overall);
      c.n_judged = v_traj.size();
      if (!v_traj.empty()) {
        c.trajectory = describe(v_traj);
        c.completion = describe(v_comp);
        c.gap = c.trajectory->mean - c.completion->mean;
        for (const auto& [k, v] : v_aspects) c.aspects[k] = describe(v);
      }

      ms.n_tasks += c.n_tasks;
      strict.push_back(c.strict_rate);
      flex.push_back(c.flex_rate);
      success.push_back(c.success_rate);
      name.push_back(c.name.mean);
      param.push_back(c.param.mean);
      order.push_back(c.order.mean);
      overall.push_back(c.overall.mean);
      if (c.trajectory) {
        traj.push_back(c.trajectory->mean);
        comp.push_back(c.completion->mean);
      }
      rep.cells.push_back(std::move(c));
    }

    ms.strict_rate = mean_of(strict);
    ms.flex_rate = mean_of(flex);
    ms.success_rate = mean_of(success);
    ms.name = mean_of(name);
    ms.param = mean_of(param);
    ms.order = mean_of(order);
    ms.overall = mean_of(overall);
    if (!traj.empty()) {
      ms.trajectory = mean_of(traj);
      ms.completion = mean_of(comp);
      ms.combined = (*ms.trajectory + *ms.completion) / 2.0;
      ms.gap = *ms.trajectory - *ms.completion;
    }
    rep.model_summaries.push_back(std::move(ms));
    diag.tools = matcher::tool_success_rates(model_reports);
    rep.diagnostics.push_back(std::move(diag));
  }

  rep.rankings = rank_models(rep.model_summaries);
  rep.correlations = compute_correlations(rep);
  metadata["average_weighting"] = "unweighted mean over domains";
  metadata["std"] = "sample (n-1)";
  metadata["n_records"] = records.size();
  rep.metadata = std::move(metadata);
  return rep;
}

void to_json(json& j, const RunReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    json aspects = json::object();
    for (const auto& [k, s] : c.aspects) aspects[k] = stat_json(s);
    cells.push_back({{"model_id", c.model_id},
                     {"domain", c.domain},
                     {"n_tasks", c.n_tasks},
                     {"strict_rate", c.strict_rate},
                     {"flex_rate", c.flex_rate},
                     {"success_rate", c.success_rate},
                     {"name", stat_json(c.name)},
                     {"param", stat_json(c.param)},
                     {"order", stat_json(c.order)},
                     {"overall", stat_json(c.overall)},
                     {"n_judged", c.n_judged},
                     {"trajectory", opt_stat_json(c.trajectory)},
                     {"completion", opt_stat_json(c.completion)},
                     {"gap", opt_json(c.gap)},
                     {"aspects", std::move(aspects)}});
  }
  json models = json::array();
  for (const auto& m : r.model_summaries) {
    models.push_back({{"model_id", m.model_id},
                      {"n_tasks", m.n_tasks},
                      {"strict_rate", m.strict_rate},
                      {"flex_rate", m.flex_rate},
                      {"success_rate", m.success_rate},
                      {"name", m.name},
                      {"param", m.param},
                      {"order", m.order},
                      {"overall", m.overall},
                      {"trajectory", opt_json(m.trajectory)},
                      {"completion", opt_json(m.completion)},
                      {"combined", opt_json(m.combined)},
                      {"gap", opt_json(m.gap)}});
  }
  json rankings = json::array();
  for (const auto& rk : r.rankings) {
    json order = json::array();
    for (const auto& [model, v] : rk.order) order.push_back({{"model_id", model}, {"value", v}});
    rankings.push_back({{"metric", rk.metric}, {"order", std::move(order)}});
  }
  json corr = json::array();
  for (const auto& c : r.correlations.pairs)
    corr.push_back({{"x", c.x}, {"y", c.y}, {"n", c.n}, {"r", c.r}, {"p_value", c.p_value}});
  json diags = json::array();
  for (const auto& d : r.diagnostics) {
    diags.push_back({{"model_id", d.model_id},
                     {"tools", d.tools},
                     {"missing_tools", d.missing_tools},
                     {"extra_tools", d.extra_tools},
                     {"param_mismatches", d.param_mismatches}});
  }
  j = json{{"report_schema", kReportSchema},
           {"metadata", r.metadata},
           {"models", r.models},
           {"domains", r.domains},
           {"overall",
            {{"n_records", r.overall.n_records},
             {"n_judged", r.overall.n_judged},
             {"overall", stat_json(r.overall.overall)},
             {"trajectory", opt_stat_json(r.overall.trajectory)},
             {"completion", opt_stat_json(r.overall.completion)},
             {"gap", opt_json(r.overall.gap)}}},
           {"cells", std::move(cells)},
           {"model_summaries", std::move(models)},
           {"rankings", std::move(rankings)},
           {"correlations", {{"pairs", std::move(corr)}, {"errors", r.correlations.errors}}},
           {"diagnostics", std::move(diags)}};
}

std::string format_rate(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", rate * 100.0);
  return buf;
}

std::string format_score(double score) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", score);
  return buf;
}

namespace {

constexpr const char* kAbsent = "—";

std::string score_or_absent(const std::optional<double>& v) { return v ? format_score(*v) : kAbsent; }

std::string stat_text(const Stat& s) {
  std::string out = format_score(s.mean) + " ± " + format_score(s.std);
  if (s.single_sample()) out += " (n=1)";
  return out;
}

void table_row(std::ostringstream& out, const std::vector<std::string>& cells) {
  out << "|";
  for (const auto& c : cells) out << " " << c << " |";
  out << "\n";
}

void table_header(std::ostringstream& out, const std::vector<std::string>& cells) {
  table_row(out, cells);
  out << "|";
  for (std::size_t i = 0; i < cells.size(); ++i) out << (i == 0 ? " --- |" : " ---: |");
  out << "\n";
}

std::string render_markdown(const RunReport& r) {
  std::ostringstream out;
  out << "# Evaluation report\n\n"
      << "Models: " << r.models.size() << " · Domains: " << r.domains.size() << " · Records: " << r.overall.n_records
      << " · Judged: " << r.overall.n_judged << "\n\n"
      << "Averages are unweighted means over domains; ± is the sample standard deviation. "
      << kAbsent << " marks missing judge data.\n\n";

  auto grid = [&](const std::string& title, const std::string& a, const std::string& b, auto value_a, auto value_b,
                  auto avg_a, auto avg_b) {
    out << "## " << title << "\n\n";
    std::vector<std::string> header{"Model"};
    for (const auto& d : r.domains) {
      header.push_back(d + " " + a);
      header.push_back(d + " " + b);
    }
    header.push_back("Average " + a);
    header.push_back("Average " + b);
    table_header(out, header);
    for (const auto& m : r.model_summaries) {
      std::vector<std::string> row{m.model_id};
      for (const auto& d : r.domains) {
        const auto* c = r.cell(m.model_id, d);
        row.push_back(c ? value_a(*c) : kAbsent);
        row.push_back(c ? value_b(*c) : kAbsent);
      }
      row.push_back(avg_a(m));
      row.push_back(avg_b(m));
      table_row(out, row);
    }
    out << "\n";
  };

  grid(
      "Tool-call accuracy", "Strict", "Flex", [](const DomainSummary& c) { return format_rate(c.strict_rate); },
      [](const DomainSummary& c) { return format_rate(c.flex_rate); },
      [](const ModelSummary& m) { return format_rate(m.strict_rate); },
      [](const ModelSummary& m) { return format_rate(m.flex_rate); });

  grid(
      "LLM judge", "Traj", "Comp",
      [](const DomainSummary& c) { return c.trajectory ? format_score(c.trajectory->mean) : kAbsent; },
      [](const DomainSummary& c) { return c.completion ? format_score(c.completion->mean) : kAbsent; },
      [](const ModelSummary& m) { return score_or_absent(m.trajectory); },
      [](const ModelSummary& m) { return score_or_absent(m.completion); });

  out << "## Match scores\n\n";
  table_header(out, {"Model", "Name", "Param", "Order", "Overall", "Success"});
  for (const auto& m : r.model_summaries) {
    table_row(out, {m.model_id, format_score(m.name), format_score(m.param), format_score(m.order),
                    format_score(m.overall), format_rate(m.success_rate)});
  }
  out << "\n## Per-domain detail\n\n";
  table_header(out, {"Model", "Domain", "Tasks", "Overall", "Trajectory", "Completion", "Gap"});
  for (const auto& c : r.cells) {
    table_row(out, {c.model_id, c.domain, std::to_string(c.n_tasks), stat_text(c.overall),
                    c.trajectory ? stat_text(*c.trajectory) : kAbsent, c.completion ? stat_text(*c.completion) : kAbsent,
                    score_or_absent(c.gap)});
  }

  out << "\n## Execution–completion gap\n\n";
  table_header(out, {"Model", "Trajectory", "Completion", "Gap"});
  for (const auto& m : r.model_summaries) {
    table_row(out, {m.model_id, score_or_absent(m.trajectory), score_or_absent(m.completion), score_or_absent(m.gap)});
  }
  table_row(out, {"**Overall**", r.overall.trajectory ? stat_text(*r.overall.trajectory) : kAbsent,
                  r.overall.completion ? stat_text(*r.overall.completion) : kAbsent, score_or_absent(r.overall.gap)});

  out << "\n## Rankings\n\n";
  for (const auto& rk : r.rankings) {
    out << "- " << rk.metric << ": ";
    for (std::size_t i = 0; i < rk.order.size(); ++i) {
      if (i) out << ", ";
      out << i + 1 << ". " << rk.order[i].first << " ("
          << (rk.metric.ends_with("_rate") ? format_rate(rk.order[i].second) : format_score(rk.order[i].second)) << ")";
    }
    out << "\n";
  }

  out << "\n## Correlations\n\n";
  if (!r.correlations.pairs.empty()) {
    table_header(out, {"Pairing", "n", "r", "p"});
    for (const auto& c : r.correlations.pairs) {
      table_row(out, {c.x + " vs " + c.y, std::to_string(c.n), format_score(c.r), format_score(c.p_value)});
    }
    out << "\n";
  }
  for (const auto& e : r.correlations.errors) out << "- not computed: " << e << "\n";
  if (!r.correlations.errors.empty()) out << "\n";

  out << "## Tool diagnostics\n";
  for (const auto& d : r.diagnostics) {
    out << "\n### " << d.model_id << "\n\n";
    table_header(out, {"Tool", "In ground truth", "Predicted", "Paired", "Pair rate", "Mean param sim"});
    for (const auto& t : d.tools) {
      table_row(out, {t.tool, std::to_string(t.times_in_gt), std::to_string(t.times_predicted),
                      std::to_string(t.times_paired), format_rate(t.pair_rate), format_score(t.mean_param_similarity)});
    }
    auto counts = [&](const char* label, const std::map<std::string, std::size_t>& m) {
      out << "\n" << label << ": ";
      if (m.empty()) out << "none";
      bool first = true;
      for (const auto& [k, v] : m) {
        out << (first ? "" : ", ") << k << " ×" << v;
        first = false;
      }
      out << "\n";
    };
    counts("Missing tools", d.missing_tools);
    counts("Extra tools", d.extra_tools);
    counts("Parameter mismatches", d.param_mismatches);
  }
  return out.str();
}

}  // namespace

std::string render(const RunReport& report, Format format) {
  if (format == Format::json) return json(report).dump(2) + "\n";
  return render_markdown(report);
}

}  // namespace mcpeval::reporting
