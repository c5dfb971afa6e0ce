#include "mcpeval/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>

#include "mcpeval/error.hpp"

namespace mcpeval::matcher {

void MatchConfig::validate() const {
  if (w_name < 0 || w_param < 0 || w_order < 0) throw PreconditionError("match config: weights must be non-negative");
  if (std::abs(w_name + w_param + w_order - 1.0) > 1e-12) {
    throw PreconditionError("match config: weights must sum to 1");
  }
  auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!unit(param_threshold) || !unit(order_threshold)) {
    throw PreconditionError("match config: thresholds must lie in [0, 1]");
  }
  if (numeric_rel_tol < 0) throw PreconditionError("match config: numeric_rel_tol must be non-negative");
}

void to_json(json& j, const MatchConfig& c) {
  j = json{{"w_name", c.w_name},
           {"w_param", c.w_param},
           {"w_order", c.w_order},
           {"param_threshold", c.param_threshold},
           {"order_threshold", c.order_threshold},
           {"numeric_rel_tol", c.numeric_rel_tol},
           {"canonicalize", c.canonicalize}};
}

void from_json(const json& j, MatchConfig& c) {
  MatchConfig d;
  c.w_name = j.value("w_name", d.w_name);
  c.w_param = j.value("w_param", d.w_param);
  c.w_order = j.value("w_order", d.w_order);
  c.param_threshold = j.value("param_threshold", d.param_threshold);
  c.order_threshold = j.value("order_threshold", d.order_threshold);
  c.numeric_rel_tol = j.value("numeric_rel_tol", d.numeric_rel_tol);
  c.canonicalize = j.value("canonicalize", d.canonicalize);
}

// --- canonical form ---------------------------------------------------------

namespace {

std::string trim_fold(const std::string& s) {
  auto is_space = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out = s.substr(b, e - b);
  // ASCII folding only; non-ASCII code points are compared as-is.
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3 : (b0 >> 3) == 0x1E ? 4 : 0;
    bool ok = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) ok = (static_cast<unsigned char>(s[i + k]) >> 6) == 0x2;
    if (!ok) {
      // Stray byte: keep it as its own unit.
      out.push_back(0xDC00u + b0);
      ++i;
      continue;
    }
    char32_t cp = len == 1 ? b0 : len == 2 ? (b0 & 0x1F) : len == 3 ? (b0 & 0x0F) : (b0 & 0x07);
    for (std::size_t k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.push_back(cp);
    i += len;
  }
  return out;
}

bool is_numeric(const json& v) { return v.is_number(); }

}  // namespace

json canonicalize(const json& value) {
  switch (value.type()) {
    case json::value_t::object: {
      json out = json::object();  // std::map-backed: keys come out sorted
      for (const auto& [k, v] : value.items()) out[k] = canonicalize(v);
      return out;
    }
    case json::value_t::array: {
      json out = json::array();
      for (const auto& v : value) out.push_back(canonicalize(v));
      return out;
    }
    case json::value_t::string:
      return trim_fold(value.get<std::string>());
    case json::value_t::number_float: {
      double d = value.get<double>();
      if (std::isfinite(d) && std::trunc(d) == d && d >= -9.2e18 && d <= 9.2e18) {
        return static_cast<std::int64_t>(d);
      }
      return d;
    }
    case json::value_t::number_unsigned: {
      auto u = value.get<std::uint64_t>();
      if (u <= static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) return static_cast<std::int64_t>(u);
      return u;
    }
    default:
      return value;
  }
}

// --- similarity -------------------------------------------------------------

std::size_t lcs_length(std::string_view a, std::string_view b) {
  auto x = decode_utf8(a);
  auto y = decode_utf8(b);
  if (x.empty() || y.empty()) return 0;
  if (y.size() > x.size()) std::swap(x, y);
  std::vector<std::size_t> prev(y.size() + 1, 0), cur(y.size() + 1, 0);
  for (std::size_t i = 1; i <= x.size(); ++i) {
    for (std::size_t j = 1; j <= y.size(); ++j) {
      cur[j] = x[i - 1] == y[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

double string_similarity(std::string_view a, std::string_view b) {
  const auto na = decode_utf8(a).size();
  const auto nb = decode_utf8(b).size();
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(lcs_length(a, b)) / static_cast<double>(na + nb);
}

double value_similarity(const json& a, const json& b, const MatchConfig& cfg) {
  if (a == b) return 1.0;
  if (is_numeric(a) && is_numeric(b)) {
    const double x = a.get<double>();
    const double y = b.get<double>();
    return std::abs(x - y) <= cfg.numeric_rel_tol * std::max(std::abs(x), std::abs(y)) ? 1.0 : 0.0;
  }
  if (a.type() != b.type()) return 0.0;
  switch (a.type()) {
    case json::value_t::string:
      return string_similarity(a.get_ref<const std::string&>(), b.get_ref<const std::string&>());
    case json::value_t::array: {
      const std::size_t n = std::max(a.size(), b.size());
      double sum = 0.0;
      for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) sum += value_similarity(a[i], b[i], cfg);
      return sum / static_cast<double>(n);
    }
    case json::value_t::object:
      return argument_similarity(a, b, cfg);
    default:
      return 0.0;  // unequal booleans / nulls
  }
}

double argument_similarity(const json& gt_args, const json& pred_args, const MatchConfig& cfg,
                           std::map<std::string, double>* per_param) {
  const json empty = json::object();
  const json& g = gt_args.is_object() ? gt_args : empty;
  const json& p = pred_args.is_object() ? pred_args : empty;
  std::set<std::string> keys;
  for (const auto& [k, v] : g.items()) keys.insert(k);
  for (const auto& [k, v] : p.items()) keys.insert(k);
  if (keys.empty()) return 1.0;
  double sum = 0.0;
  for (const auto& k : keys) {
    double s = g.contains(k) && p.contains(k) ? value_similarity(g[k], p[k], cfg) : 0.0;
    if (per_param) (*per_param)[k] = s;
    sum += s;
  }
  return sum / static_cast<double>(keys.size());
}

// --- assignment -------------------------------------------------------------

namespace {

void check_rectangular(const std::vector<std::vector<double>>& sim) {
  for (const auto& row : sim) {
    if (row.size() != sim.front().size()) throw PreconditionError("similarity matrix must be rectangular");
  }
}

struct ExhaustiveSearch {
  const std::vector<std::vector<double>>& sim;
  std::size_t rows, cols, target;
  std::vector<bool> used;
  std::vector<std::pair<std::size_t, std::size_t>> current;
  Assignment best;
  bool found = false;

  void run(std::size_t row, std::size_t paired, double partial) {
    if (paired == target) {
      if (!found || partial > best.total) {
        best.pairs = current;
        best.total = partial;
        found = true;
      }
      return;
    }
    if (row == rows) return;
    if (rows - row < target - paired) return;  // not enough rows left
    for (std::size_t c = 0; c < cols; ++c) {
      if (used[c]) continue;
      used[c] = true;
      current.emplace_back(row, c);
      run(row + 1, paired + 1, partial + sim[row][c]);
      current.pop_back();
      used[c] = false;
    }
    run(row + 1, paired, partial);  // leave this row unpaired
  }
};

}  // namespace

Assignment assign_exhaustive(const std::vector<std::vector<double>>& similarity) {
  if (similarity.empty() || similarity.front().empty()) return {};
  check_rectangular(similarity);
  const std::size_t rows = similarity.size(), cols = similarity.front().size();
  ExhaustiveSearch search{similarity, rows, cols, std::min(rows, cols), std::vector<bool>(cols, false), {}, {}, false};
  search.run(0, 0, 0.0);
  return search.best;
}

Assignment assign_greedy(const std::vector<std::vector<double>>& similarity) {
  if (similarity.empty() || similarity.front().empty()) return {};
  check_rectangular(similarity);
  const std::size_t rows = similarity.size(), cols = similarity.front().size();
  struct Candidate {
    double s;
    std::size_t r, c;
  };
  std::vector<Candidate> all;
  all.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) all.push_back({similarity[r][c], r, c});
  }
  std::stable_sort(all.begin(), all.end(), [](const Candidate& x, const Candidate& y) { return x.s > y.s; });
  std::vector<bool> row_used(rows, false), col_used(cols, false);
  Assignment out;
  const std::size_t target = std::min(rows, cols);
  for (const auto& cand : all) {
    if (out.pairs.size() == target) break;
    if (row_used[cand.r] || col_used[cand.c]) continue;
    row_used[cand.r] = col_used[cand.c] = true;
    out.pairs.emplace_back(cand.r, cand.c);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  for (const auto& [r, c] : out.pairs) out.total += similarity[r][c];
  return out;
}

void to_json(json& j, const CallMatch& m) {
  j = json{{"gt_index", m.gt_index},
           {"pred_index", m.pred_index},
           {"tool_name", m.tool_name},
           {"param_similarity", m.param_similarity},
           {"per_param", m.per_param}};
}

std::vector<CallMatch> align_calls(std::span<const ToolCall> gt, std::span<const ToolCall> pred,
                                   const MatchConfig& cfg) {
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < gt.size(); ++i) groups[gt[i].tool_name].first.push_back(i);
  for (std::size_t j = 0; j < pred.size(); ++j) groups[pred[j].tool_name].second.push_back(j);

  std::vector<CallMatch> out;
  for (const auto& [name, members] : groups) {
    const auto& [gi, pj] = members;
    if (gi.empty() || pj.empty()) continue;
    std::vector<std::vector<double>> sim(gi.size(), std::vector<double>(pj.size()));
    for (std::size_t r = 0; r < gi.size(); ++r) {
      for (std::size_t c = 0; c < pj.size(); ++c) {
        sim[r][c] = argument_similarity(gt[gi[r]].arguments, pred[pj[c]].arguments, cfg);
      }
    }
    const bool exact = gi.size() <= kExhaustiveGroupLimit && pj.size() <= kExhaustiveGroupLimit;
    Assignment a = exact ? assign_exhaustive(sim) : assign_greedy(sim);
    for (const auto& [r, c] : a.pairs) {
      CallMatch m;
      m.gt_index = gi[r];
      m.pred_index = pj[c];
      m.tool_name = name;
      m.param_similarity = argument_similarity(gt[gi[r]].arguments, pred[pj[c]].arguments, cfg, &m.per_param);
      out.push_back(std::move(m));
    }
  }
  std::sort(out.begin(), out.end(), [](const CallMatch& x, const CallMatch& y) { return x.gt_index < y.gt_index; });
  return out;
}

// --- scoring ----------------------------------------------------------------

double overall_score(double name, double param, double order, const MatchConfig& cfg) {
  return cfg.w_name * name + cfg.w_param * param + cfg.w_order * order;
}

double order_score(std::span<const CallMatch> pairs) {
  if (pairs.empty()) return 0.0;
  if (pairs.size() == 1) return 1.0;
  std::vector<const CallMatch*> by_pred;
  for (const auto& p : pairs) by_pred.push_back(&p);
  std::sort(by_pred.begin(), by_pred.end(), [](auto* x, auto* y) { return x->pred_index < y->pred_index; });
  // Patience sorting: LIS of gt indices (distinct, so LCS against sorted order).
  std::vector<std::size_t> tails;
  for (auto* p : by_pred) {
    auto it = std::lower_bound(tails.begin(), tails.end(), p->gt_index);
    if (it == tails.end()) {
      tails.push_back(p->gt_index);
    } else {
      *it = p->gt_index;
    }
  }
  return static_cast<double>(tails.size()) / static_cast<double>(pairs.size());
}

bool flex_verdict(std::span<const double> pair_similarities, std::size_t gt_count, double order,
                  const MatchConfig& cfg) {
  if (pair_similarities.size() != gt_count) return false;
  for (double s : pair_similarities) {
    if (!(s >= cfg.param_threshold)) return false;
  }
  return order >= cfg.order_threshold;
}

namespace {

std::vector<ToolCall> prepared(std::span<const ToolCall> calls, const MatchConfig& cfg) {
  std::vector<ToolCall> out(calls.begin(), calls.end());
  for (auto& c : out) {
    if (c.arguments.is_null()) c.arguments = json::object();
    if (cfg.canonicalize) c.arguments = canonicalize(c.arguments);
  }
  return out;
}

std::vector<NameCount> count_unpaired(std::span<const ToolCall> calls, const std::vector<bool>& paired) {
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < calls.size(); ++i) {
    if (!paired[i]) ++counts[calls[i].tool_name];
  }
  std::vector<NameCount> out;
  for (auto& [n, c] : counts) out.push_back({n, c});
  return out;
}

}  // namespace

TaskMatchReport score_task(std::span<const ToolCall> gt_in, std::span<const ToolCall> pred_in, const MatchConfig& cfg) {
  cfg.validate();
  if (gt_in.empty()) throw PreconditionError("score_task: ground truth must contain at least one call");
  const auto gt = prepared(gt_in, cfg);
  const auto pred = prepared(pred_in, cfg);

  TaskMatchReport r;
  r.gt_count = gt.size();
  r.pred_count = pred.size();
  r.pairs = align_calls(gt, pred, cfg);

  const double denom = static_cast<double>(std::max(gt.size(), pred.size()));
  if (!pred.empty()) {
    double sim_sum = 0.0;
    for (const auto& p : r.pairs) sim_sum += p.param_similarity;
    r.name_score = static_cast<double>(r.pairs.size()) / denom;
    r.param_score = sim_sum / denom;
    r.order_score = order_score(r.pairs);
  }
  r.overall_score = overall_score(r.name_score, r.param_score, r.order_score, cfg);

  r.strict_pass = gt.size() == pred.size();
  for (std::size_t i = 0; r.strict_pass && i < gt.size(); ++i) {
    r.strict_pass = gt[i].tool_name == pred[i].tool_name && gt[i].arguments == pred[i].arguments;
  }

  std::vector<double> sims;
  for (const auto& p : r.pairs) sims.push_back(p.param_similarity);
  r.flex_pass = flex_verdict(sims, gt.size(), r.order_score, cfg);

  std::vector<bool> gt_paired(gt.size(), false), pred_paired(pred.size(), false);
  for (const auto& p : r.pairs) {
    gt_paired[p.gt_index] = true;
    pred_paired[p.pred_index] = true;
    for (const auto& [param, s] : p.per_param) {
      if (s >= 1.0) continue;
      const auto& ga = gt_in[p.gt_index].arguments;
      const auto& pa = pred_in[p.pred_index].arguments;
      r.param_mismatches.push_back({p.tool_name, param,
                                    ga.is_object() && ga.contains(param) ? ga[param] : json(nullptr),
                                    pa.is_object() && pa.contains(param) ? pa[param] : json(nullptr), s});
    }
  }
  r.missing_tools = count_unpaired(gt, gt_paired);
  r.extra_tools = count_unpaired(pred, pred_paired);
  return r;
}

namespace {

json name_counts_json(const std::vector<NameCount>& v) {
  json out = json::array();
  for (const auto& nc : v) out.push_back({{"name", nc.name}, {"count", nc.count}});
  return out;
}

std::vector<NameCount> name_counts_from(const json& j) {
  std::vector<NameCount> out;
  for (const auto& e : j) out.push_back({e.at("name").get<std::string>(), e.at("count").get<std::size_t>()});
  return out;
}

}  // namespace

void to_json(json& j, const TaskMatchReport& r) {
  json mismatches = json::array();
  for (const auto& m : r.param_mismatches) {
    mismatches.push_back({{"tool", m.tool},
                          {"param", m.param},
                          {"gt_value", m.gt_value},
                          {"pred_value", m.pred_value},
                          {"similarity", m.similarity}});
  }
  j = json{{"name_score", r.name_score},
           {"param_score", r.param_score},
           {"order_score", r.order_score},
           {"overall_score", r.overall_score},
           {"strict_pass", r.strict_pass},
           {"flex_pass", r.flex_pass},
           {"gt_count", r.gt_count},
           {"pred_count", r.pred_count},
           {"pairs", r.pairs},
           {"missing_tools", name_counts_json(r.missing_tools)},
           {"extra_tools", name_counts_json(r.extra_tools)},
           {"param_mismatches", std::move(mismatches)}};
}

void from_json(const json& j, TaskMatchReport& r) {
  r.name_score = j.at("name_score").get<double>();
  r.param_score = j.at("param_score").get<double>();
  r.order_score = j.at("order_score").get<double>();
  r.overall_score = j.at("overall_score").get<double>();
  r.strict_pass = j.at("strict_pass").get<bool>();
  r.flex_pass = j.at("flex_pass").get<bool>();
  r.gt_count = j.value("gt_count", std::size_t{0});
  r.pred_count = j.value("pred_count", std::size_t{0});
  r.pairs.clear();
  for (const auto& p : j.value("pairs", json::array())) {
    CallMatch m;
    m.gt_index = p.at("gt_index").get<std::size_t>();
    m.pred_index = p.at("pred_index").get<std::size_t>();
    m.tool_name = p.at("tool_name").get<std::string>();
    m.param_similarity = p.at("param_similarity").get<double>();
    m.per_param = p.value("per_param", std::map<std::string, double>{});
    r.pairs.push_back(std::move(m));
  }
  r.missing_tools = name_counts_from(j.value("missing_tools", json::array()));
  r.extra_tools = name_counts_from(j.value("extra_tools", json::array()));
  r.param_mismatches.clear();
  for (const auto& m : j.value("param_mismatches", json::array())) {
    r.param_mismatches.push_back({m.at("tool").get<std::string>(), m.at("param").get<std::string>(),
                                  m.value("gt_value", json()), m.value("pred_value", json()),
                                  m.at("similarity").get<double>()});
  }
}

void to_json(json& j, const ToolStats& s) {
  j = json{{"tool", s.tool},
           {"times_in_gt", s.times_in_gt},
           {"times_predicted", s.times_predicted},
           {"times_paired", s.times_paired},
           {"pair_rate", s.pair_rate},
           {"mean_param_similarity", s.mean_param_similarity}};
}

std::vector<ToolStats> tool_success_rates(std::span<const TaskMatchReport> reports) {
  struct Acc {
    std::size_t gt = 0, pred = 0, paired = 0;
    double sim = 0.0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : reports) {
    for (const auto& p : r.pairs) {
      auto& a = acc[p.tool_name];
      ++a.gt;
      ++a.pred;
      ++a.paired;
      a.sim += p.param_similarity;
    }
    for (const auto& m : r.missing_tools) acc[m.name].gt += m.count;
    for (const auto& e : r.extra_tools) acc[e.name].pred += e.count;
  }
  std::vector<ToolStats> out;
  for (const auto& [name, a] : acc) {
    ToolStats s;
    s.tool = name;
    s.times_in_gt = a.gt;
    s.times_predicted = a.pred;
    s.times_paired = a.paired;
    s.pair_rate = a.gt == 0 ? 0.0 : static_cast<double>(a.paired) / static_cast<double>(a.gt);
    s.mean_param_similarity = a.paired == 0 ? 0.0 : a.sim / static_cast<double>(a.paired);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mcpeval::matcher
