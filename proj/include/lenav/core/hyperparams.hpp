#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "lenav/core/error.hpp"

namespace lenav {

enum class PlannerFamily { DWA, TEB };

inline constexpr std::size_t kNumHyperparams = 9;

inline std::string_view to_string(PlannerFamily f) { return f == PlannerFamily::DWA ? "DWA" : "TEB"; }

inline PlannerFamily parse_family(std::string_view s) {
  if (s == "DWA" || s == "dwa") return PlannerFamily::DWA;
  if (s == "TEB" || s == "teb") return PlannerFamily::TEB;
  throw SchemaError("unknown planner family '" + std::string(s) + "'");
}

// Slot layout shared by both families; slots 4..7 are family specific.
namespace hp {
inline constexpr std::size_t max_vel_x = 0;
inline constexpr std::size_t max_vel_theta = 1;
inline constexpr std::size_t acc_lim_x = 2;
inline constexpr std::size_t acc_lim_theta = 3;
inline constexpr std::size_t inflation_radius = 8;

namespace teb {
inline constexpr std::size_t weight_max_vel_x = 4;
inline constexpr std::size_t weight_acc_lim_x = 5;
inline constexpr std::size_t weight_acc_lim_theta = 6;
inline constexpr std::size_t weight_optimaltime = 7;
}  // namespace teb

namespace dwa {
inline constexpr std::size_t path_distance_bias = 4;
inline constexpr std::size_t goal_distance_bias = 5;
inline constexpr std::size_t occdist_scale = 6;
inline constexpr std::size_t forward_point_distance = 7;
}  // namespace dwa
}  // namespace hp

inline const std::array<std::string_view, kNumHyperparams>& hyperparam_names(PlannerFamily f) {
  static const std::array<std::string_view, kNumHyperparams> teb = {
      "max_vel_x",        "max_vel_theta",        "acc_lim_x",
      "acc_lim_theta",    "weight_max_vel_x",     "weight_acc_lim_x",
      "weight_acc_lim_theta", "weight_optimaltime", "inflation_radius"};
  static const std::array<std::string_view, kNumHyperparams> dwa = {
      "max_vel_x",          "max_vel_theta",      "acc_lim_x",
      "acc_lim_theta",      "path_distance_bias", "goal_distance_bias",
      "occdist_scale",      "forward_point_distance", "inflation_radius"};
  return f == PlannerFamily::TEB ? teb : dwa;
}

inline std::optional<std::size_t> hyperparam_index(PlannerFamily f, std::string_view name) {
  const auto& names = hyperparam_names(f);
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  return std::nullopt;
}

// Whether slot i must be strictly positive (velocities, accelerations, radii, distances).
inline bool must_be_positive(PlannerFamily f, std::size_t i) {
  if (i <= hp::acc_lim_theta || i == hp::inflation_radius) return true;
  return f == PlannerFamily::DWA && i == hp::dwa::forward_point_distance;
}

// The nine tuned planner hyperparameters in physical units.
struct HyperparamVector {
  PlannerFamily family = PlannerFamily::DWA;
  std::array<double, kNumHyperparams> values{};

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  friend bool operator==(const HyperparamVector&, const HyperparamVector&) = default;
};

struct NormalizedHyperparams {
  PlannerFamily family = PlannerFamily::DWA;
  std::array<double, kNumHyperparams> u{};

  double operator[](std::size_t i) const { return u[i]; }
  double& operator[](std::size_t i) { return u[i]; }
  friend bool operator==(const NormalizedHyperparams&, const NormalizedHyperparams&) = default;
};

struct Bounds {
  double lo = 0.0;
  double hi = 1.0;
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

class NormalizationSpec {
 public:
  NormalizationSpec(PlannerFamily family, const std::array<Bounds, kNumHyperparams>& bounds)
      : family_(family), bounds_(bounds) {
    const auto& names = hyperparam_names(family_);
    for (std::size_t i = 0; i < kNumHyperparams; ++i) {
      const Bounds& b = bounds_[i];
      if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || !(b.lo < b.hi))
        throw SchemaError("invalid bounds for " + std::string(names[i]) + ": need lo < hi");
    }
  }

  // Expert bounds bracketing common ROS defaults.
  static NormalizationSpec defaults(PlannerFamily family) {
    std::array<Bounds, kNumHyperparams> b{};
    b[hp::max_vel_x] = {0.2, 1.2};
    b[hp::max_vel_theta] = {0.3, 1.5};
    b[hp::acc_lim_x] = {0.2, 1.5};
    b[hp::acc_lim_theta] = {0.3, 2.0};
    b[hp::inflation_radius] = {0.2, 0.8};
    if (family == PlannerFamily::TEB) {
      b[hp::teb::weight_max_vel_x] = {0.5, 3.0};
      b[hp::teb::weight_acc_lim_x] = {0.5, 3.0};
      b[hp::teb::weight_acc_lim_theta] = {0.5, 3.0};
      b[hp::teb::weight_optimaltime] = {0.5, 5.0};
    } else {
      b[hp::dwa::path_distance_bias] = {10.0, 50.0};
      b[hp::dwa::goal_distance_bias] = {10.0, 40.0};
      b[hp::dwa::occdist_scale] = {0.005, 0.1};
      b[hp::dwa::forward_point_distance] = {0.1, 0.6};
    }
    return NormalizationSpec(family, b);
  }

  // Keys are hyperparameter names mapping to [lo, hi]; missing keys keep the defaults.
  static NormalizationSpec from_json(PlannerFamily family, const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("normalization spec must be a JSON object");
    auto b = defaults(family).bounds_;
    for (const auto& [key, value] : j.items()) {
      const auto idx = hyperparam_index(family, key);
      if (!idx) throw SchemaError("unknown hyperparameter '" + key + "' for " + std::string(to_string(family)));
      if (!value.is_array() || value.size() != 2 || !value[0].is_number() || !value[1].is_number())
        throw SchemaError("bounds for '" + key + "' must be [lo, hi]");
      b[*idx] = {value[0].get<double>(), value[1].get<double>()};
    }
    return NormalizationSpec(family, b);
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    const auto& names = hyperparam_names(family_);
    for (std::size_t i = 0; i < kNumHyperparams; ++i) j[std::string(names[i])] = {bounds_[i].lo, bounds_[i].hi};
    return j;
  }

  PlannerFamily family() const { return family_; }
  const Bounds& operator[](std::size_t i) const { return bounds_[i]; }
  const std::array<Bounds, kNumHyperparams>& bounds() const { return bounds_; }

 private:
  PlannerFamily family_;
  std::array<Bounds, kNumHyperparams> bounds_;
};

namespace detail {
inline void check_family(PlannerFamily a, PlannerFamily b) {
  if (a != b)
    throw SchemaError("planner family mismatch: " + std::string(to_string(a)) + " vs " + std::string(to_string(b)));
}
}  // namespace detail

// Clamps out-of-range values (with a warning) and maps each slot to [0, 1].
inline NormalizedHyperparams normalize(const HyperparamVector& h, const NormalizationSpec& spec) {
  detail::check_family(h.family, spec.family());
  NormalizedHyperparams out{h.family, {}};
  const auto& names = hyperparam_names(h.family);
  for (std::size_t i = 0; i < kNumHyperparams; ++i) {
    const Bounds& b = spec[i];
    double v = h[i];
    if (!std::isfinite(v)) throw RangeError("non-finite value for " + std::string(names[i]));
    if (v < b.lo || v > b.hi) {
      std::ostringstream msg;
      msg << names[i] << "=" << v << " outside [" << b.lo << ", " << b.hi << "], clamped";
      warn(msg.str());
      v = std::clamp(v, b.lo, b.hi);
    }
    out[i] = (v - b.lo) / (b.hi - b.lo);
  }
  return out;
}

namespace detail {
inline double checked_unit(double u, std::string_view name) {
  constexpr double tol = 1e-9;
  if (!std::isfinite(u) || u < -tol || u > 1.0 + tol)
    throw RangeError("normalized " + std::string(name) + " = " + std::to_string(u) + " outside [0, 1]");
  return std::clamp(u, 0.0, 1.0);
}
}  // namespace detail

inline HyperparamVector denormalize(const NormalizedHyperparams& u, const NormalizationSpec& spec) {
  detail::check_family(u.family, spec.family());
  HyperparamVector h{u.family, {}};
  const auto& names = hyperparam_names(u.family);
  for (std::size_t i = 0; i < kNumHyperparams; ++i) {
    const double x = detail::checked_unit(u[i], names[i]);
    h[i] = spec[i].lo + x * (spec[i].hi - spec[i].lo);
  }
  return h;
}

// Per-slot user ranges; unset slots fall back to the expert bounds.
using UserBounds = std::array<std::optional<Bounds>, kNumHyperparams>;

inline HyperparamVector user_remap(const NormalizedHyperparams& u, const NormalizationSpec& expert,
                                   const UserBounds& user) {
  detail::check_family(u.family, expert.family());
  HyperparamVector h{u.family, {}};
  const auto& names = hyperparam_names(u.family);
  for (std::size_t i = 0; i < kNumHyperparams; ++i) {
    Bounds b = expert[i];
    if (user[i]) {
      b = *user[i];
      if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || !(b.lo < b.hi))
        throw SchemaError("invalid user bounds for " + std::string(names[i]));
    }
    const double x = detail::checked_unit(u[i], names[i]);
    h[i] = b.lo + x * (b.hi - b.lo);
  }
  return h;
}

inline bool is_valid(const HyperparamVector& h) {
  for (std::size_t i = 0; i < kNumHyperparams; ++i) {
    if (!std::isfinite(h[i])) return false;
    if (must_be_positive(h.family, i) && !(h[i] > 0.0)) return false;
  }
  return true;
}

inline nlohmann::json to_json(const HyperparamVector& h) {
  nlohmann::json j = nlohmann::json::object();
  const auto& names = hyperparam_names(h.family);
  for (std::size_t i = 0; i < kNumHyperparams; ++i) j[std::string(names[i])] = h[i];
  return j;
}

inline HyperparamVector hyperparams_from_json(PlannerFamily family, const nlohmann::json& j) {
  HyperparamVector h{family, {}};
  const auto& names = hyperparam_names(family);
  for (std::size_t i = 0; i < kNumHyperparams; ++i) {
    const std::string key(names[i]);
    if (!j.contains(key) || !j[key].is_number()) throw SchemaError("missing hyperparameter '" + key + "'");
    h[i] = j[key].get<double>();
  }
  return h;
}

}  // namespace lenav
