#pragma once

#include <algorithm>
#include <array>
#include <cstdint>

#include <json.hpp>

#include "lenav/core/error.hpp"
#include "lenav/core/hyperparams.hpp"
#include "lenav/core/random.hpp"
#include "lenav/scene/rating.hpp"

namespace lenav::dataio {

inline constexpr double kDefaultExpertNoise = 0.03;  // normalized units

// Progressive and conservative corners, given as fractions of the normalization bounds.
struct ExpertPresets {
  NormalizedHyperparams progressive;
  NormalizedHyperparams conservative;

  static ExpertPresets defaults(PlannerFamily f) {
    ExpertPresets p{{f, {}}, {f, {}}};
    auto set = [&](std::size_t i, double prog, double cons) {
      p.progressive[i] = prog;
      p.conservative[i] = cons;
    };
    set(hp::max_vel_x, 0.8, 0.3);
    set(hp::max_vel_theta, 0.8, 0.3);
    set(hp::acc_lim_x, 0.8, 0.3);
    set(hp::acc_lim_theta, 0.8, 0.3);
    set(hp::inflation_radius, 0.3, 0.8);
    if (f == PlannerFamily::TEB) {
      set(hp::teb::weight_max_vel_x, 0.3, 0.8);
      set(hp::teb::weight_acc_lim_x, 0.3, 0.8);
      set(hp::teb::weight_acc_lim_theta, 0.3, 0.8);
      set(hp::teb::weight_optimaltime, 0.8, 0.3);
    } else {
      set(hp::dwa::path_distance_bias, 0.4, 0.8);
      set(hp::dwa::goal_distance_bias, 0.8, 0.4);
      set(hp::dwa::occdist_scale, 0.3, 0.8);
      set(hp::dwa::forward_point_distance, 0.8, 0.4);
    }
    return p;
  }

  HyperparamVector progressive_physical(const NormalizationSpec& spec) const { return denormalize(progressive, spec); }
  HyperparamVector conservative_physical(const NormalizationSpec& spec) const { return denormalize(conservative, spec); }
};

// Linear blend toward the conservative corner by scene difficulty, plus clamped Gaussian noise.
inline NormalizedHyperparams synth_expert_normalized(const scene::SceneRating& r, PlannerFamily family,
                                                     const ExpertPresets& presets, double sigma, std::uint64_t seed) {
  lenav::detail::check_family(presets.progressive.family, family);
  lenav::detail::check_family(presets.conservative.family, family);
  for (std::size_t i = 0; i < kNumHyperparams; ++i)
    for (double u : {presets.progressive[i], presets.conservative[i]})
      if (!(u >= 0.0 && u <= 1.0)) throw RangeError("expert preset outside normalization bounds");
  if (!(sigma >= 0.0)) throw RangeError("expert noise must be >= 0");
  const double d = std::clamp(scene::scene_difficulty(r), 0.0, 1.0);
  Rng rng(seed);
  NormalizedHyperparams u{family, {}};
  for (std::size_t i = 0; i < kNumHyperparams; ++i) {
    const double base = presets.progressive[i] * (1.0 - d) + presets.conservative[i] * d;
    const double noise = sigma > 0.0 ? sigma * rng.normal() : 0.0;
    u[i] = std::clamp(base + noise, 0.0, 1.0);
  }
  return u;
}

inline HyperparamVector synth_expert(const scene::SceneRating& r, PlannerFamily family, const ExpertPresets& presets,
                                     double sigma, std::uint64_t seed, const NormalizationSpec& spec) {
  return denormalize(synth_expert_normalized(r, family, presets, sigma, seed), spec);
}

inline HyperparamVector synth_expert(const scene::SceneRating& r, PlannerFamily family, const ExpertPresets& presets,
                                     double sigma, std::uint64_t seed) {
  return synth_expert(r, family, presets, sigma, seed, NormalizationSpec::defaults(family));
}

}  // namespace lenav::dataio
