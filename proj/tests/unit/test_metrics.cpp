#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fixtures.hpp"
#include "lenav/metrics/metrics.hpp"

namespace lenav::metrics {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

HyperparamVector scaled(const HyperparamVector& e, double f) {
  HyperparamVector g = e;
  for (double& v : g.values) v *= f;
  return g;
}

sim::RunLog log_with_ttc(const std::vector<double>& ttc) {
  sim::RunLog log;
  for (std::size_t i = 0; i < ttc.size(); ++i) {
    sim::TickRecord t;
    t.time = 0.1 * static_cast<double>(i);
    t.ttc = ttc[i];
    log.ticks.push_back(t);
  }
  return log;
}

sim::RunLog log_with_speed(const std::vector<double>& v) {
  sim::RunLog log;
  for (std::size_t i = 0; i < v.size(); ++i) {
    sim::TickRecord t;
    t.time = 0.1 * static_cast<double>(i);
    t.v = v[i];
    log.ticks.push_back(t);
  }
  return log;
}

std::vector<MethodSummary> load_table() {
  std::ifstream in(std::string(LENAV_TEST_DATA_DIR) + "/table3.csv");
  return read_metrics_csv(in);
}

// Published Score column, read independently of the metrics parser.
std::vector<double> published_scores() {
  std::ifstream in(std::string(LENAV_TEST_DATA_DIR) + "/table3.csv");
  std::vector<double> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    out.push_back(std::stod(line.substr(line.rfind(',') + 1)));
  }
  return out;
}

MethodSummary method(double time, double acc, double jerk, RiskRates r, int failed = 0) {
  MethodSummary m;
  m.scenario = "s";
  m.method = "m";
  m.trials = 3;
  m.failed = failed;
  m.time = time;
  m.acc = acc;
  m.jerk = jerk;
  m.risk = r;
  return m;
}

TEST(GenEval, ExactMatchIsZero) {
  const auto e = fixture::at_fraction(PlannerFamily::TEB, 0.4);
  const auto r = gen_eval({e}, e);
  EXPECT_EQ(r.top_err, 0.0);
  EXPECT_EQ(r.mean_err, 0.0);
  EXPECT_EQ(r.k, 1);
}

TEST(GenEval, TenPercentOffEveryDim) {
  const auto e = fixture::at_fraction(PlannerFamily::DWA, 0.3);
  const auto r = gen_eval({scaled(e, 1.1)}, e);
  EXPECT_NEAR(r.top_err, 10.0, 1e-9);
  EXPECT_NEAR(r.mean_err, 10.0, 1e-9);
}

TEST(GenEval, TopIsMinimumMeanIsAverage) {
  const auto e = fixture::at_fraction(PlannerFamily::DWA, 0.5);
  const auto r = gen_eval({scaled(e, 1.05), scaled(e, 0.92), scaled(e, 1.12)}, e);
  EXPECT_NEAR(r.top_err, 5.0, 1e-9);
  EXPECT_NEAR(r.mean_err, 25.0 / 3.0, 1e-9);
  EXPECT_EQ(r.k, 3);
}

TEST(GenEval, ZeroExpertDimensionIsSkippedWithWarning) {
  auto e = fixture::at_fraction(PlannerFamily::DWA, 0.5);
  e[hp::dwa::path_distance_bias] = 0.0;
  auto g = scaled(e, 1.2);
  g[hp::dwa::path_distance_bias] = 7.0;
  std::vector<std::string> warnings;
  auto saved = warning_sink();
  warning_sink() = [&](const std::string& m) { warnings.push_back(m); };
  const auto r = gen_eval({g}, e);
  warning_sink() = saved;
  EXPECT_NEAR(r.top_err, 20.0, 1e-9);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("path_distance_bias"), std::string::npos);
}

TEST(GenEval, NormalizedInputsCompareInPhysicalUnits) {
  const auto spec = NormalizationSpec::defaults(PlannerFamily::TEB);
  NormalizedHyperparams e{PlannerFamily::TEB, {}}, g{PlannerFamily::TEB, {}};
  e.u.fill(0.5);
  g.u.fill(0.6);
  const auto r = gen_eval({g}, e, spec);
  const auto direct = gen_eval({denormalize(g, spec)}, denormalize(e, spec));
  EXPECT_DOUBLE_EQ(r.mean_err, direct.mean_err);
}

TEST(GenEval, PropertiesOnRandomSamples) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    HyperparamVector e{PlannerFamily::TEB, {}};
    for (double& v : e.values) v = rng.uniform(0.1, 5.0);
    std::vector<HyperparamVector> gs;
    for (int k = 0; k < 10; ++k) {
      auto g = e;
      for (double& v : g.values) v *= rng.uniform(0.5, 1.5);
      gs.push_back(g);
    }
    const auto r = gen_eval(gs, e);
    EXPECT_LE(r.top_err, r.mean_err);
    EXPECT_GE(r.top_err, 0.0);
    // Rescaling one dimension's units for both sides leaves the errors unchanged.
    const double f = rng.uniform(0.01, 100.0);
    const std::size_t dim = rng.below(kNumHyperparams);
    auto e2 = e;
    e2[dim] *= f;
    auto gs2 = gs;
    for (auto& g : gs2) g[dim] *= f;
    const auto r2 = gen_eval(gs2, e2);
    EXPECT_NEAR(r2.top_err, r.top_err, 1e-9);
    EXPECT_NEAR(r2.mean_err, r.mean_err, 1e-9);
  }
}

TEST(GenEval, EmptyAndMismatchedFamilies) {
  const auto e = fixture::at_fraction(PlannerFamily::TEB, 0.5);
  EXPECT_THROW(gen_eval({}, e), RangeError);
  EXPECT_THROW(gen_eval({fixture::at_fraction(PlannerFamily::DWA, 0.5)}, e), SchemaError);
}

TEST(Risk, AllInfiniteIsZero) {
  const auto r = risk_rates(log_with_ttc(std::vector<double>(30, kInf)));
  EXPECT_EQ(r.local, 0.0);
  EXPECT_EQ(r.within_5s, 0.0);
  EXPECT_EQ(r.within_2s, 0.0);
}

TEST(Risk, ThresholdSemantics) {
  const auto r = risk_rates(log_with_ttc(std::vector<double>(10, 3.0)));
  EXPECT_EQ(r.local, 100.0);
  EXPECT_EQ(r.within_5s, 100.0);
  EXPECT_EQ(r.within_2s, 0.0);
}

TEST(Risk, HandCountedSchedule) {
  // 8 ticks: finite at 5 of them; <= 5 s at 4 (5.0 counts); <= 2 s at 2 (2.0 counts).
  const auto r = risk_rates(log_with_ttc({kInf, 9.0, 5.0, 4.2, kInf, 2.0, 0.3, kInf}));
  EXPECT_DOUBLE_EQ(r.local, 62.5);
  EXPECT_DOUBLE_EQ(r.within_5s, 50.0);
  EXPECT_DOUBLE_EQ(r.within_2s, 25.0);
}

TEST(Risk, NestingOnRandomLogs) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> ttc;
    const int n = 1 + static_cast<int>(rng.below(200));
    for (int i = 0; i < n; ++i) ttc.push_back(rng.bernoulli(0.4) ? kInf : rng.uniform(0.0, 10.0));
    const auto r = risk_rates(log_with_ttc(ttc));
    EXPECT_GE(r.local, r.within_5s);
    EXPECT_GE(r.within_5s, r.within_2s);
    EXPECT_LE(r.local, 100.0);
    EXPECT_GE(r.within_2s, 0.0);
  }
}

TEST(Comfort, ConstantSpeedIsZero) {
  const auto c = comfort(log_with_speed(std::vector<double>(20, 0.7)));
  EXPECT_EQ(c.acc, 0.0);
  EXPECT_EQ(c.jerk, 0.0);
}

TEST(Comfort, RampThenCruise) {
  // 1 m/s^2 for 1 s then constant: 10 of 20 differences are 1, one 10 m/s^3 step among 19.
  std::vector<double> v;
  for (int i = 0; i <= 20; ++i) v.push_back(std::min(1.0, 0.1 * i));
  const auto c = comfort(log_with_speed(v));
  EXPECT_NEAR(c.acc, 0.5, 1e-9);
  EXPECT_NEAR(c.jerk, 10.0 / 19.0, 1e-9);
}

TEST(Comfort, HandComputedFixture) {
  // acc = 1, 2, 0.5, 0, -1.5; jerk = 10, -15, -5, -15
  const auto c = comfort(log_with_speed({0.0, 0.1, 0.3, 0.35, 0.35, 0.2}));
  EXPECT_NEAR(c.acc, 1.0, 1e-9);
  EXPECT_NEAR(c.jerk, 11.25, 1e-9);
}

TEST(Summary, AveragesSuccessfulRunsOnly) {
  RunMetrics ok1{true, 10.0, {10, 5, 1}, {0.2, 4.0}};
  RunMetrics ok2{true, 20.0, {30, 15, 3}, {0.4, 6.0}};
  RunMetrics bad{false, 99.0, {90, 90, 90}, {9.0, 99.0}};
  const auto s = summarize("x", "m", {ok1, bad, ok2});
  EXPECT_EQ(s.trials, 3);
  EXPECT_EQ(s.failed, 1);
  EXPECT_DOUBLE_EQ(s.time, 15.0);
  EXPECT_DOUBLE_EQ(s.risk.local, 20.0);
  EXPECT_DOUBLE_EQ(s.acc, 0.3);
  EXPECT_DOUBLE_EQ(s.jerk, 5.0);
}

TEST(Score, ReproducesPublishedTable) {
  const auto rows = load_table();
  const auto published = published_scores();
  ASSERT_EQ(rows.size(), 35u);
  ASSERT_EQ(published.size(), rows.size());
  const auto s = score_by_scenario(rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].successes() == 0)
      EXPECT_EQ(s[i], 0.0) << rows[i].scenario << ' ' << rows[i].method;
    else
      EXPECT_NEAR(s[i], published[i], 0.002) << rows[i].scenario << ' ' << rows[i].method;
  }
}

TEST(Score, NamedEntries) {
  const auto rows = load_table();
  const auto s = score_by_scenario(rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].scenario == "d" && rows[i].method == "DWA-conservative") EXPECT_NEAR(s[i], 0.7633, 0.002);
    if (rows[i].scenario == "b" && rows[i].method == "DADWA") EXPECT_NEAR(s[i], 0.2358, 0.002);
    if (rows[i].scenario == "a" && rows[i].method == "TEB-progressive") EXPECT_EQ(s[i], 0.0);
  }
}

TEST(Score, DegeneratePoolGivesZeroNorms) {
  // A single successful method: every min-max norm is 0, so only the safety terms remain.
  const auto s = score({method(30, 0.3, 9, {20, 10, 5})});
  EXPECT_NEAR(s[0], (0.5 * 0.8 + 1.0 * 0.9 + 1.5 * 0.95) / 4.0, 1e-12);
}

TEST(Score, PropertiesOnRandomPools) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<MethodSummary> ms;
    const int n = 1 + static_cast<int>(rng.below(7));
    for (int k = 0; k < n; ++k) {
      const double l = rng.uniform(0, 100), f = rng.uniform(0, l), t = rng.uniform(0, f);
      ms.push_back(method(rng.uniform(10, 90), rng.uniform(0.1, 0.6), rng.uniform(8, 12), {l, f, t},
                          static_cast<int>(rng.below(4))));
    }
    ms[0].failed = 0;
    const auto s = score(ms);
    for (std::size_t k = 0; k < ms.size(); ++k) {
      EXPECT_GE(s[k], 0.0);
      EXPECT_LE(s[k], 1.0);
      EXPECT_EQ(s[k] == 0.0, ms[k].successes() == 0);
    }
    // Lower risk never lowers the score.
    const std::size_t k = rng.below(ms.size());
    auto safer = ms;
    safer[k].risk.within_2s *= rng.uniform(0.0, 1.0);
    EXPECT_GE(score(safer)[k], s[k]);
  }
}

TEST(Score, ErrorsAndWeights) {
  EXPECT_THROW(score({method(30, 0.3, 9, {1, 1, 1}, 3)}), RangeError);
  ScoreWeights w;
  w.beta[1] = 0.0;
  EXPECT_THROW(score({method(30, 0.3, 9, {1, 1, 1})}, w), ConfigError);
  // Overridden weights still normalize by their sum.
  ScoreWeights w2;
  w2.alpha = {1, 1, 1};
  w2.beta = {1, 1, 1};
  EXPECT_NEAR(score({method(30, 0.3, 9, {0, 0, 0})}, w2)[0], 0.5, 1e-12);
}

TEST(MetricsCsv, RoundTripKeepsScores) {
  const auto rows = load_table();
  const auto s = score_by_scenario(rows);
  std::stringstream ss;
  write_metrics_csv(ss, rows, s);
  const auto again = read_metrics_csv(ss);
  ASSERT_EQ(again.size(), rows.size());
  const auto s2 = score_by_scenario(again);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s2[i], s[i], 1e-9);
  std::ostringstream table;
  write_metrics_table(table, rows, s);
  EXPECT_NE(table.str().find("0.7633"), std::string::npos);
}

TEST(MetricsCsv, MalformedInputsReportLine) {
  std::istringstream bad_number(std::string(kMetricsColumns) + "\nd,m,3,0,abc,1,1,1,0.1,9\n");
  try {
    read_metrics_csv(bad_number);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream missing(std::string(kMetricsColumns) + "\nd,m,3,0,-,1,1,1,0.1,9\n");
  EXPECT_THROW(read_metrics_csv(missing), ParseError);
  std::istringstream short_row(std::string(kMetricsColumns) + "\nd,m,3\n");
  EXPECT_THROW(read_metrics_csv(short_row), ParseError);
  std::istringstream no_header("scenario,method\n");
  EXPECT_THROW(read_metrics_csv(no_header), ParseError);
  std::istringstream empty("");
  EXPECT_THROW(read_metrics_csv(empty), ParseError);
}

}  // namespace
}  // namespace lenav::metrics
