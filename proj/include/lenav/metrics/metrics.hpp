#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lenav/core/error.hpp"
#include "lenav/core/hyperparams.hpp"
#include "lenav/sim/runlog.hpp"

namespace lenav::metrics {

// ---------------------------------------------------------------------------
// Generation error

struct GenEvalResult {
  double top_err = 0.0;   // percent
  double mean_err = 0.0;  // percent
  int k = 0;
};

// Mean over dimensions of |g - e| / |e| * 100, in physical units. Zero expert dims are skipped.
inline double percent_error(const HyperparamVector& g, const HyperparamVector& e) {
  lenav::detail::check_family(g.family, e.family);
  double sum = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < kNumHyperparams; ++i) {
    if (e[i] == 0.0) {
      warn("expert value of " + std::string(hyperparam_names(e.family)[i]) + " is 0; dimension excluded");
      continue;
    }
    sum += std::abs(g[i] - e[i]) / std::abs(e[i]) * 100.0;
    ++used;
  }
  if (used == 0) throw RangeError("percent_error: every expert dimension is zero");
  return sum / used;
}

inline GenEvalResult gen_eval(const std::vector<HyperparamVector>& generated, const HyperparamVector& expert) {
  if (generated.empty()) throw RangeError("gen_eval: need k >= 1 samples");
  GenEvalResult r;
  r.k = static_cast<int>(generated.size());
  r.top_err = std::numeric_limits<double>::infinity();
  for (const auto& g : generated) {
    const double e = percent_error(g, expert);
    r.top_err = std::min(r.top_err, e);
    r.mean_err += e;
  }
  r.mean_err /= r.k;
  return r;
}

inline GenEvalResult gen_eval(const std::vector<NormalizedHyperparams>& generated, const NormalizedHyperparams& expert,
                              const NormalizationSpec& spec) {
  std::vector<HyperparamVector> g;
  for (const auto& u : generated) g.push_back(denormalize(u, spec));
  return gen_eval(g, denormalize(expert, spec));
}

// Average of per-sample results over a validation set.
inline GenEvalResult average(const std::vector<GenEvalResult>& rs) {
  if (rs.empty()) throw RangeError("average: no samples");
  GenEvalResult out;
  out.k = rs.front().k;
  for (const auto& r : rs) {
    out.top_err += r.top_err;
    out.mean_err += r.mean_err;
  }
  out.top_err /= static_cast<double>(rs.size());
  out.mean_err /= static_cast<double>(rs.size());
  return out;
}

// ---------------------------------------------------------------------------
// Run statistics

struct RiskRates {
  double local = 0.0;  // % ticks with finite TTC
  double within_5s = 0.0;
  double within_2s = 0.0;
};

inline RiskRates risk_rates(const sim::RunLog& log) {
  RiskRates r;
  if (log.ticks.empty()) return r;
  for (const auto& t : log.ticks) {
    if (std::isfinite(t.ttc)) r.local += 1.0;
    if (t.ttc <= 5.0) r.within_5s += 1.0;
    if (t.ttc <= 2.0) r.within_2s += 1.0;
  }
  const double n = static_cast<double>(log.ticks.size());
  r.local *= 100.0 / n;
  r.within_5s *= 100.0 / n;
  r.within_2s *= 100.0 / n;
  return r;
}

struct Comfort {
  double acc = 0.0;   // mean |dv/dt|
  double jerk = 0.0;  // mean |d2v/dt2|
};

inline Comfort comfort(const sim::RunLog& log, double dt = sim::kControlPeriod) {
  const auto& t = log.ticks;
  Comfort c;
  if (t.size() < 3) return c;
  std::vector<double> acc;
  for (std::size_t i = 1; i < t.size(); ++i) acc.push_back((t[i].v - t[i - 1].v) / dt);
  for (double a : acc) c.acc += std::abs(a);
  c.acc /= static_cast<double>(acc.size());
  for (std::size_t i = 1; i < acc.size(); ++i) c.jerk += std::abs((acc[i] - acc[i - 1]) / dt);
  c.jerk /= static_cast<double>(acc.size() - 1);
  return c;
}

struct RunMetrics {
  bool success = false;
  double time = 0.0;  // s to goal
  RiskRates risk;
  Comfort comfort;
};

inline RunMetrics run_metrics(const sim::RunLog& log, bool success) {
  RunMetrics m;
  m.success = success;
  m.time = log.ticks.empty() ? 0.0 : log.ticks.back().time;
  m.risk = risk_rates(log);
  m.comfort = comfort(log);
  return m;
}

// ---------------------------------------------------------------------------
// Score

// One method in one scenario; metric fields are means over successful trials.
struct MethodSummary {
  std::string scenario;
  std::string method;
  int trials = 0;
  int failed = 0;
  double time = std::numeric_limits<double>::quiet_NaN();
  RiskRates risk{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                 std::numeric_limits<double>::quiet_NaN()};
  double acc = std::numeric_limits<double>::quiet_NaN();
  double jerk = std::numeric_limits<double>::quiet_NaN();

  int successes() const { return trials - failed; }
};

inline MethodSummary summarize(std::string scenario, std::string method, const std::vector<RunMetrics>& runs) {
  MethodSummary s;
  s.scenario = std::move(scenario);
  s.method = std::move(method);
  s.trials = static_cast<int>(runs.size());
  int ok = 0;
  double t = 0, rl = 0, r5 = 0, r2 = 0, a = 0, j = 0;
  for (const auto& r : runs) {
    if (!r.success) continue;
    ++ok;
    t += r.time;
    rl += r.risk.local;
    r5 += r.risk.within_5s;
    r2 += r.risk.within_2s;
    a += r.comfort.acc;
    j += r.comfort.jerk;
  }
  s.failed = s.trials - ok;
  if (ok > 0) {
    s.time = t / ok;
    s.risk = {rl / ok, r5 / ok, r2 / ok};
    s.acc = a / ok;
    s.jerk = j / ok;
  }
  return s;
}

struct ScoreWeights {
  std::array<double, 3> alpha{0.8, 0.1, 0.1};  // time, acc, jerk
  std::array<double, 3> beta{0.5, 1.0, 1.5};   // local, 5 s, 2 s

  void validate() const {
    for (double a : alpha)
      if (!(a > 0.0)) throw ConfigError("score weights must be positive");
    for (double b : beta)
      if (!(b > 0.0)) throw ConfigError("score weights must be positive");
  }
  double total() const { return alpha[0] + alpha[1] + alpha[2] + beta[0] + beta[1] + beta[2]; }
};

namespace detail {
// (max - x) / (max - min) over the pool; 0 when the pool is degenerate.
inline double inverted_minmax(double x, double lo, double hi) { return hi > lo ? (hi - x) / (hi - lo) : 0.0; }
}  // namespace detail

// Scores for methods competing in one scenario, in input order.
inline std::vector<double> score(const std::vector<MethodSummary>& methods, const ScoreWeights& w = {}) {
  w.validate();
  constexpr double inf = std::numeric_limits<double>::infinity();
  double t_lo = inf, t_hi = -inf, a_lo = inf, a_hi = -inf, j_lo = inf, j_hi = -inf;
  bool any = false;
  for (const auto& m : methods) {
    if (m.trials <= 0 || m.failed < 0 || m.failed > m.trials) throw RangeError("method " + m.method + ": bad trial counts");
    if (m.successes() == 0) continue;
    any = true;
    t_lo = std::min(t_lo, m.time);
    t_hi = std::max(t_hi, m.time);
    a_lo = std::min(a_lo, m.acc);
    a_hi = std::max(a_hi, m.acc);
    j_lo = std::min(j_lo, m.jerk);
    j_hi = std::max(j_hi, m.jerk);
  }
  if (!any) throw RangeError("score: no method has a successful trial");
  std::vector<double> out;
  for (const auto& m : methods) {
    if (m.successes() == 0) {
      out.push_back(0.0);
      continue;
    }
    const double raw = w.alpha[0] * detail::inverted_minmax(m.time, t_lo, t_hi) +
                       w.alpha[1] * detail::inverted_minmax(m.acc, a_lo, a_hi) +
                       w.alpha[2] * detail::inverted_minmax(m.jerk, j_lo, j_hi) + w.beta[0] * (1.0 - m.risk.local / 100.0) +
                       w.beta[1] * (1.0 - m.risk.within_5s / 100.0) + w.beta[2] * (1.0 - m.risk.within_2s / 100.0);
    out.push_back(static_cast<double>(m.successes()) / m.trials * raw / w.total());
  }
  return out;
}

// Scores every scenario group independently; output aligned with the input.
inline std::vector<double> score_by_scenario(const std::vector<MethodSummary>& rows, const ScoreWeights& w = {}) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) groups[rows[i].scenario].push_back(i);
  std::vector<double> out(rows.size(), 0.0);
  for (const auto& [name, idx] : groups) {
    std::vector<MethodSummary> g;
    for (std::size_t i : idx) g.push_back(rows[i]);
    const auto s = score(g, w);
    for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = s[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV and report

inline constexpr const char* kMetricsColumns = "scenario,method,trials,failed,time,risk_local,risk_5s,risk_2s,acc,jerk";

namespace detail {
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Blank or "-" means not available (all trials failed).
inline double parse_cell(const std::string& s, std::size_t line) {
  if (s.empty() || s == "-") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("not a number: '" + s + "'", line);
  }
}

inline void put(std::ostream& os, double x) {
  if (std::isnan(x))
    os << '-';
  else
    os << x;
}
}  // namespace detail

// Header row required; '#' lines and blank lines are skipped. Extra columns (e.g. a score) are ignored.
inline std::vector<MethodSummary> read_metrics_csv(std::istream& in) {
  std::vector<MethodSummary> rows;
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> col;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) col[cells[i]] = i;
      for (const char* need : {"scenario", "method", "trials", "failed", "time", "risk_local", "risk_5s", "risk_2s", "acc", "jerk"})
        if (!col.count(need)) throw ParseError(std::string("missing column ") + need, lineno);
      continue;
    }
    if (cells.size() < col.size()) throw ParseError("expected " + std::to_string(col.size()) + " cells", lineno);
    auto at = [&](const char* name) { return cells[col[name]]; };
    MethodSummary m;
    m.scenario = at("scenario");
    m.method = at("method");
    const double trials = detail::parse_cell(at("trials"), lineno), failed = detail::parse_cell(at("failed"), lineno);
    if (!(trials >= 1) || !(failed >= 0) || failed > trials || trials != std::floor(trials) || failed != std::floor(failed))
      throw ParseError("bad trial counts", lineno);
    m.trials = static_cast<int>(trials);
    m.failed = static_cast<int>(failed);
    m.time = detail::parse_cell(at("time"), lineno);
    m.risk = {detail::parse_cell(at("risk_local"), lineno), detail::parse_cell(at("risk_5s"), lineno),
              detail::parse_cell(at("risk_2s"), lineno)};
    m.acc = detail::parse_cell(at("acc"), lineno);
    m.jerk = detail::parse_cell(at("jerk"), lineno);
    if (m.successes() > 0)
      for (double v : {m.time, m.risk.local, m.risk.within_5s, m.risk.within_2s, m.acc, m.jerk})
        if (!std::isfinite(v)) throw ParseError("method with successes needs every metric", lineno);
    rows.push_back(std::move(m));
  }
  if (col.empty()) throw ParseError("missing header", lineno);
  return rows;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<MethodSummary>& rows, const std::vector<double>& scores) {
  os << kMetricsColumns << ",score\n";
  os << std::setprecision(10);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& m = rows[i];
    os << m.scenario << ',' << m.method << ',' << m.trials << ',' << m.failed;
    for (double v : {m.time, m.risk.local, m.risk.within_5s, m.risk.within_2s, m.acc, m.jerk}) {
      os << ',';
      detail::put(os, v);
    }
    os << ',' << std::fixed << std::setprecision(4) << scores[i] << std::defaultfloat << std::setprecision(10) << '\n';
  }
}

inline void write_metrics_table(std::ostream& os, const std::vector<MethodSummary>& rows, const std::vector<double>& scores) {
  os << std::left << std::setw(10) << "scenario" << std::setw(16) << "method" << std::right << std::setw(8) << "failed"
     << std::setw(9) << "T(s)" << std::setw(22) << "risk % (loc/5s/2s)" << std::setw(7) << "Acc" << std::setw(7) << "J"
     << std::setw(8) << "Score" << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& m = rows[i];
    std::ostringstream risk, t, a, j;
    risk << std::fixed << std::setprecision(2);
    t << std::fixed << std::setprecision(2);
    a << std::fixed << std::setprecision(2);
    j << std::fixed << std::setprecision(2);
    if (m.successes() > 0) {
      risk << m.risk.local << '/' << m.risk.within_5s << '/' << m.risk.within_2s;
      t << m.time;
      a << m.acc;
      j << m.jerk;
    } else {
      risk << '-';
      t << '-';
      a << '-';
      j << '-';
    }
    os << std::left << std::setw(10) << m.scenario << std::setw(16) << m.method << std::right << std::setw(8)
       << (std::to_string(m.failed) + "/" + std::to_string(m.trials)) << std::setw(9) << t.str() << std::setw(22)
       << risk.str() << std::setw(7) << a.str() << std::setw(7) << j.str() << std::setw(8) << std::fixed
       << std::setprecision(4) << scores[i] << std::defaultfloat << '\n';
  }
}

}  // namespace lenav::metrics
