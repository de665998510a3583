#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lenav/core/hyperparams.hpp"
#include "lenav/core/random.hpp"
#include "lenav/cvae/model.hpp"
#include "lenav/metrics/metrics.hpp"
#include "lenav/nav/episode.hpp"
#include "lenav/scene/rating.hpp"

namespace lenav::pipeline {

inline constexpr int kTopK = 10;

struct GenReport {
  metrics::GenEvalResult overall;
  std::vector<metrics::GenEvalResult> per_example;
};

// Top/Mean error of k prior samples per validation window, after applying `mode` to each window.
inline GenReport evaluate_generation(const cvae::ModelParams& p, const std::vector<cvae::Example>& set,
                                     PlannerFamily family, const scene::LossMode& mode, std::uint64_t seed,
                                     int k = kTopK) {
  if (set.empty()) throw RangeError("evaluate_generation: empty set");
  const auto spec = NormalizationSpec::defaults(family);
  GenReport r;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto w = scene::apply_loss(set[i].window, mode, mix_seed(seed, 2 * i));
    const auto gen = cvae::generate(p, w, k, mix_seed(seed, 2 * i + 1), family);
    NormalizedHyperparams expert{family, {}};
    for (std::size_t j = 0; j < kNumHyperparams; ++j) expert[j] = set[i].target[j];
    r.per_example.push_back(metrics::gen_eval(gen, expert, spec));
  }
  r.overall = metrics::average(r.per_example);
  return r;
}

// Retunes from the latest rating window; a window with no valid rating keeps the current values.
inline nav::Tuner cvae_tuner(const cvae::ModelParams& p, PlannerFamily family, std::uint64_t seed) {
  const auto spec = NormalizationSpec::defaults(family);
  const std::size_t slots = static_cast<std::size_t>(p.config.slots);
  return [p, family, spec, seed, slots](const nav::RatingHistory& h) -> std::optional<HyperparamVector> {
    const auto w = h.latest_window(slots);
    if (w.valid_count() == 0) return std::nullopt;
    return denormalize(cvae::generate(p, w, 1, mix_seed(seed, h.size()), family).front(), spec);
  };
}

}  // namespace lenav::pipeline
