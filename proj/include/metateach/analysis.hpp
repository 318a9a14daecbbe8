#pragma once

// Learning-progress metrics extracted from session logs, and the rank
// statistics used to compare groups of sessions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "metateach/errors.hpp"
#include "metateach/json_io.hpp"
#include "metateach/session.hpp"

namespace metateach {

struct SessionMetrics {
  std::string session_id;
  Mode mode = Mode::PreferenceOnly;
  std::optional<int> first_hit_trial;  // 1-based
  int total_hits = 0;
  std::vector<bool> hits_per_trial;
  std::map<std::string, int> modality_counts;            // meta events by kind
  std::vector<std::map<std::string, int>> meta_per_trial;  // same, split by trial

  // First-hit trial with hitless sessions scored as one past the budget.
  int censored_first_hit() const {
    return first_hit_trial.value_or(static_cast<int>(hits_per_trial.size()) + 1);
  }
};

// A trial counts as a hit when either presented movement holes out.
inline SessionMetrics extract_metrics(const SessionLog& log) {
  if (!log_finished(log)) {
    throw MalformedLogError(!log.empty() && log.back().kind == "truncated" ? "log is truncated"
                                                                            : "log is not finished");
  }
  const LogHeader header = parse_log_header(log);
  SessionMetrics m;
  m.session_id = header.session_id;
  m.mode = header.mode;
  const auto n = static_cast<std::size_t>(header.config.num_trials);
  m.hits_per_trial.assign(n, false);
  m.meta_per_trial.assign(n, {});
  std::size_t outcomes = 0;
  try {
    for (const LogRecord& r : log) {
      if (r.kind != "outcome" && r.kind != "feedback") continue;
      if (r.trial_index < 0 || static_cast<std::size_t>(r.trial_index) >= n) {
        throw MalformedLogError("trial index out of range");
      }
      const auto t = static_cast<std::size_t>(r.trial_index);
      if (r.kind == "outcome") {
        ++outcomes;
        m.hits_per_trial[t] = r.payload.at("first").at("hit").get<bool>() ||
                              r.payload.at("second").at("hit").get<bool>();
      } else {
        for (const auto& e : events_from_json(r.payload.at("events"))) {
          if (!is_meta(e)) continue;
          const std::string name(modality_name(e));
          ++m.modality_counts[name];
          ++m.meta_per_trial[t][name];
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedLogError(std::string("bad record: ") + e.what());
  } catch (const ValidationError& e) {
    throw MalformedLogError(std::string("bad record: ") + e.what());
  }
  if (outcomes != n) throw MalformedLogError("finished log is missing outcome records");
  for (std::size_t t = 0; t < n; ++t) {
    if (!m.hits_per_trial[t]) continue;
    ++m.total_hits;
    if (!m.first_hit_trial) m.first_hit_trial = static_cast<int>(t) + 1;
  }
  return m;
}

// --- ranks -----------------------------------------------------------------

// Ranks 1..n, tied values sharing the mean of the ranks they span.
inline std::vector<double> midranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

struct MannWhitneyResult {
  double u = 0.0;  // U of group A: rank sum of A minus nA(nA+1)/2
  double z = 0.0;  // normal score with tie and continuity correction
  double p_two_sided = 1.0;
  double p_a_greater = 1.0;  // one-sided, A tends to larger values
  double p_a_less = 1.0;     // one-sided, A tends to smaller values
  bool exact = false;
};

enum class PValueMethod { Auto, Exact, Normal };

inline constexpr std::size_t kExactTestMaxN = 12;

inline MannWhitneyResult mann_whitney(const std::vector<double>& a, const std::vector<double>& b,
                                      PValueMethod method = PValueMethod::Auto) {
  if (a.empty() || b.empty()) throw EmptyGroupError("both groups need at least one value");
  const std::size_t na = a.size(), nb = b.size(), n = na + nb;
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::vector<double> ranks = midranks(pooled);

  double rank_sum = 0.0;
  for (std::size_t i = 0; i < na; ++i) rank_sum += ranks[i];
  MannWhitneyResult r;
  r.u = rank_sum - 0.5 * static_cast<double>(na * (na + 1));

  const double mu = 0.5 * static_cast<double>(na * nb);
  double ties = 0.0;
  for (const auto& [value, count] : [&] {
         std::map<double, double> c;
         for (double v : pooled) c[v] += 1.0;
         return c;
       }()) {
    ties += count * count * count - count;
  }
  const double nd = static_cast<double>(n);
  const double var = static_cast<double>(na * nb) / 12.0 * ((nd + 1.0) - ties / (nd * (nd - 1.0)));
  const double sd = std::sqrt(std::max(var, 0.0));
  const double diff = r.u - mu;
  const boost::math::normal normal;
  if (sd > 0.0) {
    const double corrected = std::max(std::abs(diff) - 0.5, 0.0);
    r.z = std::copysign(corrected / sd, diff);
    if (diff == 0.0) r.z = 0.0;
    r.p_two_sided = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(normal, corrected / sd)));
    r.p_a_greater = boost::math::cdf(boost::math::complement(normal, (diff - 0.5) / sd));
    r.p_a_less = boost::math::cdf(normal, (diff + 0.5) / sd);
  }

  const bool exact = method == PValueMethod::Exact || (method == PValueMethod::Auto && n <= kExactTestMaxN);
  if (!exact) return r;
  if (n > 30) throw ValidationError("exact enumeration is limited to 30 values");
  r.exact = true;
  // Doubled midranks are integers, so every comparison below is exact.
  std::vector<long> twice(n);
  for (std::size_t i = 0; i < n; ++i) twice[i] = std::lround(2.0 * ranks[i]);
  const long observed = std::lround(2.0 * rank_sum);
  const long center = static_cast<long>(na * (n + 1));  // twice the expected rank sum
  std::uint64_t total = 0, ge = 0, le = 0, extreme = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != na) continue;
    long sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) sum += twice[i];
    }
    ++total;
    if (sum >= observed) ++ge;
    if (sum <= observed) ++le;
    if (std::labs(sum - center) >= std::labs(observed - center)) ++extreme;
  }
  const double td = static_cast<double>(total);
  r.p_a_greater = static_cast<double>(ge) / td;
  r.p_a_less = static_cast<double>(le) / td;
  r.p_two_sided = std::min(1.0, static_cast<double>(extreme) / td);
  return r;
}

// --- correlation -----------------------------------------------------------

struct SpearmanResult {
  double rho = 0.0;
  double p = 1.0;  // two-sided, t approximation with n - 2 degrees of freedom
  std::size_t n = 0;
};

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelationError("correlation with a constant vector");
  return sxy / std::sqrt(sxx * syy);
}

inline SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionError("spearman needs equal-length vectors");
  if (x.size() < 3) throw ValidationError("spearman needs at least 3 pairs");
  SpearmanResult r;
  r.n = x.size();
  r.rho = std::clamp(pearson(midranks(x), midranks(y)), -1.0, 1.0);
  const double df = static_cast<double>(r.n) - 2.0;
  if (std::abs(r.rho) >= 1.0) {
    r.p = 0.0;
  } else {
    const double t = r.rho * std::sqrt(df / (1.0 - r.rho * r.rho));
    const boost::math::students_t dist(df);
    r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  }
  return r;
}

// --- group report ----------------------------------------------------------

struct MeanSd {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();  // sample SD, NaN below 2 values
  std::size_t n = 0;
};

inline MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd m;
  m.n = v.size();
  if (v.empty()) return m;
  double s = 0.0;
  for (double x : v) s += x;
  m.mean = s / static_cast<double>(v.size());
  if (v.size() < 2) return m;
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return m;
}

struct CorrelationRow {
  std::string modality;  // "any" pools all meta events
  std::optional<SpearmanResult> result;  // empty when undefined
  std::string note;
};

struct GroupSummary {
  std::string label;
  std::size_t sessions = 0;
  MeanSd first_hit;           // sessions that hit at least once
  MeanSd first_hit_censored;  // hitless sessions scored as budget + 1
  MeanSd total_hits;
  std::vector<int> hits_by_trial;
  std::map<std::string, int> modality_counts;
  std::vector<CorrelationRow> correlations;
};

struct GroupReport {
  GroupSummary a, b;
  MannWhitneyResult first_hit_test;  // on censored first-hit trials
  MannWhitneyResult total_hits_test;
};

namespace detail {

// Pools every (session, trial) cell: meta events used in the trial vs hit.
inline std::vector<CorrelationRow> usage_correlations(const std::vector<SessionMetrics>& group) {
  std::vector<std::string> names{"any"};
  for (const auto& m : kMetaModalities) names.emplace_back(m);
  std::vector<CorrelationRow> rows;
  for (const std::string& name : names) {
    std::vector<double> usage, hit;
    for (const SessionMetrics& s : group) {
      for (std::size_t t = 0; t < s.hits_per_trial.size(); ++t) {
        double count = 0.0;
        for (const auto& [kind, c] : s.meta_per_trial[t]) {
          if (name == "any" || kind == name) count += c;
        }
        usage.push_back(count);
        hit.push_back(s.hits_per_trial[t] ? 1.0 : 0.0);
      }
    }
    CorrelationRow row{name, std::nullopt, ""};
    try {
      row.result = spearman(usage, hit);
    } catch (const Error& e) {
      row.note = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline GroupSummary summarize(const std::string& label, const std::vector<SessionMetrics>& group) {
  if (group.empty()) throw EmptyGroupError("group " + label + " has no sessions");
  GroupSummary g;
  g.label = label;
  g.sessions = group.size();
  std::vector<double> first, censored, totals;
  std::size_t trials = 0;
  for (const auto& s : group) trials = std::max(trials, s.hits_per_trial.size());
  g.hits_by_trial.assign(trials, 0);
  for (const auto& s : group) {
    if (s.first_hit_trial) first.push_back(*s.first_hit_trial);
    censored.push_back(s.censored_first_hit());
    totals.push_back(s.total_hits);
    for (std::size_t t = 0; t < s.hits_per_trial.size(); ++t) g.hits_by_trial[t] += s.hits_per_trial[t];
    for (const auto& [k, c] : s.modality_counts) g.modality_counts[k] += c;
  }
  g.first_hit = mean_sd(first);
  g.first_hit_censored = mean_sd(censored);
  g.total_hits = mean_sd(totals);
  g.correlations = usage_correlations(group);
  return g;
}

inline std::vector<double> censored_first_hits(const std::vector<SessionMetrics>& g) {
  std::vector<double> v;
  for (const auto& s : g) v.push_back(s.censored_first_hit());
  return v;
}

inline std::vector<double> total_hits(const std::vector<SessionMetrics>& g) {
  std::vector<double> v;
  for (const auto& s : g) v.push_back(s.total_hits);
  return v;
}

inline std::string num(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream out;
  out << std::setprecision(10) << v;
  return out.str();
}

}  // namespace detail

inline GroupReport group_report(const std::vector<SessionMetrics>& a, const std::vector<SessionMetrics>& b,
                                const std::string& label_a = "A", const std::string& label_b = "B") {
  GroupReport r;
  r.a = detail::summarize(label_a, a);
  r.b = detail::summarize(label_b, b);
  r.first_hit_test = mann_whitney(detail::censored_first_hits(a), detail::censored_first_hits(b));
  r.total_hits_test = mann_whitney(detail::total_hits(a), detail::total_hits(b));
  return r;
}

inline GroupReport group_report(const std::vector<SessionLog>& a, const std::vector<SessionLog>& b,
                                const std::string& label_a = "A", const std::string& label_b = "B") {
  auto metrics = [](const std::vector<SessionLog>& logs) {
    std::vector<SessionMetrics> out;
    for (const auto& log : logs) out.push_back(extract_metrics(log));
    return out;
  };
  return group_report(metrics(a), metrics(b), label_a, label_b);
}

// --- report files ----------------------------------------------------------

inline void write_summary_csv(std::ostream& out, const GroupReport& r) {
  using detail::num;
  out << "group,sessions,sessions_with_hit,first_hit_mean,first_hit_sd,first_hit_censored_mean,"
         "first_hit_censored_sd,total_hits_mean,total_hits_sd\n";
  for (const GroupSummary* g : {&r.a, &r.b}) {
    out << g->label << ',' << g->sessions << ',' << g->first_hit.n << ',' << num(g->first_hit.mean) << ','
        << num(g->first_hit.sd) << ',' << num(g->first_hit_censored.mean) << ','
        << num(g->first_hit_censored.sd) << ',' << num(g->total_hits.mean) << ',' << num(g->total_hits.sd)
        << '\n';
  }
}

inline void write_hit_rate_csv(std::ostream& out, const GroupReport& r) {
  out << "group,trial,hits,sessions,hit_rate\n";
  for (const GroupSummary* g : {&r.a, &r.b}) {
    for (std::size_t t = 0; t < g->hits_by_trial.size(); ++t) {
      out << g->label << ',' << t + 1 << ',' << g->hits_by_trial[t] << ',' << g->sessions << ','
          << detail::num(static_cast<double>(g->hits_by_trial[t]) / static_cast<double>(g->sessions)) << '\n';
    }
  }
}

inline void write_tests_csv(std::ostream& out, const GroupReport& r) {
  using detail::num;
  out << "metric,U,Z,p_two_sided,p_a_greater,p_a_less,exact\n";
  auto row = [&](const char* name, const MannWhitneyResult& t) {
    out << name << ',' << num(t.u) << ',' << num(t.z) << ',' << num(t.p_two_sided) << ','
        << num(t.p_a_greater) << ',' << num(t.p_a_less) << ',' << (t.exact ? "true" : "false") << '\n';
  };
  row("first_hit_censored", r.first_hit_test);
  row("total_hits", r.total_hits_test);
}

inline void write_spearman_csv(std::ostream& out, const GroupReport& r) {
  using detail::num;
  out << "group,modality,n,rho,p\n";
  for (const GroupSummary* g : {&r.a, &r.b}) {
    for (const auto& c : g->correlations) {
      out << g->label << ',' << c.modality << ',';
      if (c.result) {
        out << c.result->n << ',' << num(c.result->rho) << ',' << num(c.result->p) << '\n';
      } else {
        out << ",NA,NA\n";
      }
    }
  }
}

inline std::string summary_text(const GroupReport& r) {
  using detail::num;
  std::ostringstream out;
  for (const GroupSummary* g : {&r.a, &r.b}) {
    out << "Group " << g->label << " (" << g->sessions << " sessions)\n";
    out << "  first hit trial: mean " << num(g->first_hit.mean) << ", SD " << num(g->first_hit.sd) << " over "
        << g->first_hit.n << " sessions with a hit\n";
    out << "  first hit trial, hitless = " << g->hits_by_trial.size() + 1 << ": mean "
        << num(g->first_hit_censored.mean) << ", SD " << num(g->first_hit_censored.sd) << '\n';
    out << "  total hits: mean " << num(g->total_hits.mean) << ", SD " << num(g->total_hits.sd) << '\n';
    if (!g->modality_counts.empty()) {
      out << "  meta feedback used:";
      for (const auto& [k, c] : g->modality_counts) out << ' ' << k << '=' << c;
      out << '\n';
    }
  }
  auto test = [&](const char* name, const MannWhitneyResult& t) {
    out << "Mann-Whitney " << name << ": U=" << num(t.u) << " Z=" << num(t.z) << " p=" << num(t.p_two_sided)
        << " (one-sided: A greater p=" << num(t.p_a_greater) << ", A less p=" << num(t.p_a_less) << ")"
        << (t.exact ? " exact" : "") << '\n';
  };
  test("first hit (censored)", r.first_hit_test);
  test("total hits", r.total_hits_test);
  return out.str();
}

}  // namespace metateach
