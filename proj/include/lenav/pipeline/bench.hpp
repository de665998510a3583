#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lenav/core/error.hpp"
#include "lenav/core/hyperparams.hpp"
#include "lenav/core/random.hpp"
#include "lenav/cvae/model.hpp"
#include "lenav/dataio/expert.hpp"
#include "lenav/metrics/metrics.hpp"
#include "lenav/nav/episode.hpp"
#include "lenav/pipeline/evaluate.hpp"

namespace lenav::pipeline {

enum class Tuning { Progressive, Conservative, Adaptive };

struct Method {
  std::string name;
  PlannerFamily family = PlannerFamily::DWA;
  Tuning tuning = Tuning::Progressive;
};

inline std::string method_name(PlannerFamily f, Tuning t) {
  const std::string fam(to_string(f));
  switch (t) {
    case Tuning::Progressive: return fam + "-progressive";
    case Tuning::Conservative: return fam + "-conservative";
    case Tuning::Adaptive: return "LE-Nav-" + fam;
  }
  return fam;
}

// Fixed presets for both families, plus the adaptive method for each family that has a model.
inline std::vector<Method> default_methods(bool teb_model, bool dwa_model) {
  std::vector<Method> m;
  for (auto f : {PlannerFamily::TEB, PlannerFamily::DWA}) {
    for (auto t : {Tuning::Progressive, Tuning::Conservative}) m.push_back({method_name(f, t), f, t});
    if (f == PlannerFamily::TEB ? teb_model : dwa_model) m.push_back({method_name(f, Tuning::Adaptive), f, Tuning::Adaptive});
  }
  return m;
}

struct Models {
  std::optional<cvae::ModelParams> teb;
  std::optional<cvae::ModelParams> dwa;

  const cvae::ModelParams& for_family(PlannerFamily f) const {
    const auto& m = f == PlannerFamily::TEB ? teb : dwa;
    if (!m) throw ConfigError("no model loaded for " + std::string(to_string(f)));
    return *m;
  }
};

inline nav::Tuner make_tuner(const Method& m, const Models& models, std::uint64_t seed) {
  if (m.tuning != Tuning::Adaptive) return nav::fixed_tuner();
  return cvae_tuner(models.for_family(m.family), m.family, seed);
}

inline HyperparamVector initial_hyperparams(const Method& m) {
  const auto pr = dataio::ExpertPresets::defaults(m.family);
  const auto spec = NormalizationSpec::defaults(m.family);
  return m.tuning == Tuning::Conservative ? pr.conservative_physical(spec) : pr.progressive_physical(spec);
}

struct TrialRecord {
  std::string scenario;
  std::string method;
  int trial = 0;
  std::uint64_t seed = 0;
  nav::Outcome outcome = nav::Outcome::Timeout;
  metrics::RunMetrics metrics;
  nav::Episode episode;
};

struct BenchConfig {
  int trials = 3;
  std::uint64_t seed = 1;
  std::uint64_t config_hash = 0;
  bool keep_episodes = false;
};

struct BenchResult {
  std::vector<TrialRecord> trials;
  std::vector<metrics::MethodSummary> summaries;  // scenario-major, methods in the given order
};

// Trial k of a scenario runs every method on the same perturbed world, in a seeded random order.
inline TrialRecord run_trial(const sim::Scenario& world, const Method& m, const Models& models, int trial,
                             std::uint64_t seed, std::uint64_t config_hash) {
  nav::EpisodeOptions o;
  o.family = m.family;
  o.initial = initial_hyperparams(m);
  o.seed = seed;
  o.config_hash = config_hash;
  TrialRecord r;
  r.scenario = world.name;
  r.method = m.name;
  r.trial = trial;
  r.seed = seed;
  r.episode = nav::run_episode(world, make_tuner(m, models, seed), o);
  r.outcome = r.episode.outcome;
  r.metrics = metrics::run_metrics(r.episode.log, r.episode.success());
  return r;
}

inline BenchResult bench(const std::vector<sim::Scenario>& scenarios, const std::vector<Method>& methods,
                         const Models& models, const BenchConfig& cfg) {
  if (cfg.trials < 1) throw ConfigError("bench: trials must be >= 1");
  if (methods.empty()) throw ConfigError("bench: no methods");
  BenchResult res;
  Rng order_rng(mix_seed(cfg.seed, 0x0bde));
  for (std::size_t si = 0; si < scenarios.size(); ++si) {
    std::map<std::string, std::vector<metrics::RunMetrics>> runs;
    for (int k = 0; k < cfg.trials; ++k) {
      const std::uint64_t trial_seed = mix_seed(cfg.seed, 100 * si + static_cast<std::uint64_t>(k));
      const sim::Scenario world = nav::perturb_scenario(scenarios[si], trial_seed);
      std::vector<std::size_t> order(methods.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      order_rng.shuffle(order);
      for (std::size_t i : order) {
        auto rec = run_trial(world, methods[i], models, k, mix_seed(trial_seed, i), cfg.config_hash);
        runs[methods[i].name].push_back(rec.metrics);
        if (!cfg.keep_episodes) rec.episode = {};
        res.trials.push_back(std::move(rec));
      }
    }
    for (const auto& m : methods) res.summaries.push_back(metrics::summarize(scenarios[si].name, m.name, runs[m.name]));
  }
  return res;
}

}  // namespace lenav::pipeline
