#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "lenav/core/error.hpp"
#include "lenav/core/random.hpp"
#include "lenav/sim/world.hpp"

namespace lenav::scene {

inline constexpr std::size_t kNumDims = 5;
inline constexpr double kRatingPeriod = 2.0;  // 0.5 Hz
inline constexpr double kDefaultWindowSpan = 8.0;
inline constexpr double kPaddingConfidence = 0.5;

enum Dim : std::size_t {
  pedestrian_presence = 0,
  pedestrian_density = 1,
  movement_direction = 2,
  proximity = 3,
  background_difficulty = 4,
};

inline constexpr std::array<const char*, kNumDims> kDimNames = {
    "pedestrian_presence", "pedestrian_density", "movement_direction", "proximity", "background_difficulty"};

struct SceneRating {
  double time = 0.0;
  std::array<int, kNumDims> dims{1, 1, 1, 1, 1};
  std::array<double, kNumDims> confidence{1.0, 1.0, 1.0, 1.0, 1.0};
};

inline bool is_valid(const SceneRating& r) {
  for (int d : r.dims)
    if (d < 1 || d > 5) return false;
  for (double c : r.confidence)
    if (!(c >= 0.0 && c <= 1.0)) return false;
  if (r.dims[pedestrian_presence] == 1 &&
      (r.dims[pedestrian_density] != 1 || r.dims[movement_direction] != 1 || r.dims[proximity] != 1))
    return false;
  return true;
}

inline nlohmann::json to_json(const SceneRating& r) {
  nlohmann::json j;
  j["time"] = r.time;
  j["dims"] = r.dims;
  j["confidence"] = r.confidence;
  return j;
}

inline SceneRating rating_from_json(const nlohmann::json& j) {
  SceneRating r;
  try {
    r.time = j.value("time", 0.0);
    r.dims = j.at("dims").get<std::array<int, kNumDims>>();
    if (j.contains("confidence")) r.confidence = j["confidence"].get<std::array<double, kNumDims>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("scene rating: ") + e.what());
  }
  if (!is_valid(r)) throw SchemaError("scene rating out of range");
  return r;
}

// ---------------------------------------------------------------------------
// Ground-truth rater

struct RaterConfig {
  double perception_range = 8.0;
};

namespace detail {

inline int bin_density(int count) {
  if (count <= 0) return 1;
  if (count == 1) return 2;
  if (count <= 3) return 3;
  if (count <= 6) return 4;
  return 5;
}

// Positive closing rate = approaching.
inline int bin_direction(double closing_rate) {
  if (closing_rate < -0.5) return 1;
  if (closing_rate < -0.1) return 2;
  if (closing_rate <= 0.1) return 3;
  if (closing_rate <= 0.5) return 4;
  return 5;
}

inline int bin_proximity(double nearest) {
  if (nearest > 6.0) return 1;
  if (nearest > 4.0) return 2;
  if (nearest > 2.5) return 3;
  if (nearest >= 1.5) return 4;
  return 5;
}

inline int bin_unit(double x) {
  if (x < 0.2) return 1;
  if (x < 0.4) return 2;
  if (x < 0.6) return 3;
  if (x < 0.8) return 4;
  return 5;
}

}  // namespace detail

// Fraction of occupied cells in the robot-centered local window.
inline double local_occupancy(const sim::WorldState& world) {
  const auto& g = world.map->grid;
  const double half = 0.5 * world.local_window;
  const Vec2 c = world.robot.pose.position();
  const sim::Cell lo = g.cell_of({c.x - half, c.y - half});
  const sim::Cell hi = g.cell_of({c.x + half, c.y + half});
  long total = 0, occ = 0;
  for (int j = lo.j; j <= hi.j; ++j)
    for (int i = lo.i; i <= hi.i; ++i) {
      ++total;
      if (!g.in_bounds(i, j) || g.occupied(i, j)) ++occ;
    }
  return total > 0 ? static_cast<double>(occ) / static_cast<double>(total) : 0.0;
}

// Free width of the passage the robot is in: twice the distance to the nearest
// static obstacle surface, capped at the window size.
inline double passage_width(const sim::WorldState& world) {
  const double d = world.map->field.surface_distance(world.robot.pose.position());
  return std::clamp(2.0 * d, 0.0, world.local_window);
}

inline double background_score(const sim::WorldState& world) {
  const double occ = std::min(1.0, local_occupancy(world) / 0.3);
  const double narrow = std::clamp((3.0 - passage_width(world)) / 2.2, 0.0, 1.0);
  return 0.5 * occ + 0.5 * narrow;
}

inline SceneRating rate_ground_truth(const sim::WorldState& world, const RaterConfig& cfg = {}) {
  SceneRating r;
  r.time = world.time;
  const Vec2 p = world.robot.pose.position();
  const Vec2 vr{world.robot.v * std::cos(world.robot.pose.theta), world.robot.v * std::sin(world.robot.pose.theta)};
  int count = 0;
  double nearest = std::numeric_limits<double>::infinity();
  double closing = 0.0;
  for (const auto& ped : world.pedestrians) {
    const Vec2 rel = ped.position - p;
    const double d = norm(rel);
    if (d > cfg.perception_range) continue;
    ++count;
    nearest = std::min(nearest, d);
    if (d > 0.0) closing += -dot(rel, ped.velocity - vr) / d;
  }
  r.dims[background_difficulty] = detail::bin_unit(background_score(world));
  if (count == 0) return r;
  r.dims[pedestrian_presence] = 5;
  r.dims[pedestrian_density] = detail::bin_density(count);
  r.dims[movement_direction] = detail::bin_direction(closing / count);
  r.dims[proximity] = detail::bin_proximity(nearest);
  return r;
}

// Scalar difficulty in [0, 1] used to blend expert presets.
inline double scene_difficulty(const SceneRating& r) {
  const double s = 0.35 * r.dims[proximity] + 0.25 * r.dims[pedestrian_density] + 0.2 * r.dims[movement_direction] +
                   0.2 * r.dims[background_difficulty];
  return (s - 1.0) / 4.0;
}

// ---------------------------------------------------------------------------
// Condition window

struct ConditionWindow {
  std::vector<SceneRating> ratings;  // oldest first
  std::vector<std::uint8_t> valid;

  std::size_t size() const { return ratings.size(); }
  std::size_t valid_count() const { return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1)); }
};

inline std::size_t window_slots(double span = kDefaultWindowSpan) {
  return static_cast<std::size_t>(std::lround(span / kRatingPeriod)) + 1;
}

// Window ending at `history.back()`: missing history before the sequence start is invalid.
inline ConditionWindow window_from_history(const std::vector<SceneRating>& history, std::size_t end,
                                           std::size_t slots = window_slots()) {
  ConditionWindow w;
  w.ratings.resize(slots);
  w.valid.assign(slots, 0);
  for (std::size_t k = 0; k < slots; ++k) {
    const std::size_t back = slots - 1 - k;
    if (back <= end && end - back < history.size()) {
      w.ratings[k] = history[end - back];
      w.valid[k] = 1;
    }
  }
  return w;
}

enum class LossKind { None, Random, Latest, LatestTwo };

struct LossMode {
  LossKind kind = LossKind::None;
  double p = 0.0;

  static LossMode none() { return {}; }
  static LossMode random(double p) { return {LossKind::Random, p}; }
  static LossMode latest() { return {LossKind::Latest, 0.0}; }
  static LossMode latest_two() { return {LossKind::LatestTwo, 0.0}; }
};

inline std::string to_string(const LossMode& m) {
  switch (m.kind) {
    case LossKind::None: return "none";
    case LossKind::Random: return "random:" + std::to_string(m.p);
    case LossKind::Latest: return "latest";
    case LossKind::LatestTwo: return "latest2";
  }
  return "none";
}

// Accepts none | latest | latest2 | random:<p>.
inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "none") return LossMode::none();
  if (s == "latest") return LossMode::latest();
  if (s == "latest2" || s == "latest-two") return LossMode::latest_two();
  if (s.rfind("random:", 0) == 0) {
    double p = 0.0;
    try {
      p = std::stod(s.substr(7));
    } catch (const std::exception&) {
      throw ConfigError("bad loss mode: " + s);
    }
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("loss probability must be in [0, 1]");
    return LossMode::random(p);
  }
  throw ConfigError("unknown loss mode: " + s);
}

// The oldest valid slot is never dropped, so a non-empty window stays non-empty.
inline ConditionWindow apply_loss(ConditionWindow w, const LossMode& mode, Rng& rng) {
  const std::size_t n = w.size();
  if (mode.kind == LossKind::LatestTwo && n < 3) throw RangeError("LatestTwo needs at least 3 slots");
  std::size_t oldest = n;
  for (std::size_t k = 0; k < n; ++k)
    if (w.valid[k]) {
      oldest = k;
      break;
    }
  auto drop = [&](std::size_t k) {
    if (k != oldest) w.valid[k] = 0;
  };
  switch (mode.kind) {
    case LossKind::None: break;
    case LossKind::Random:
      for (std::size_t k = 0; k < n; ++k)
        if (rng.uniform() < mode.p) drop(k);
      break;
    case LossKind::Latest: drop(n - 1); break;
    case LossKind::LatestTwo:
      drop(n - 1);
      drop(n - 2);
      break;
  }
  return w;
}

inline ConditionWindow apply_loss(const ConditionWindow& w, const LossMode& mode, std::uint64_t seed) {
  Rng rng(seed);
  return apply_loss(w, mode, rng);
}

}  // namespace lenav::scene
