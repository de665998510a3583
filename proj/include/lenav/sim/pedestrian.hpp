#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lenav/core/error.hpp"
#include "lenav/core/geometry.hpp"

namespace lenav::sim {

inline constexpr double kMaxPedestrianSpeed = 2.0;

enum class ScriptEnd { Stop, Loop, PingPong };

// Waypoint script: segment k runs waypoints[k] -> waypoints[k+1] at speeds[k].
struct PedestrianScript {
  std::vector<Vec2> waypoints;
  std::vector<double> speeds;
  double start_time = 0.0;
  double radius = 0.25;
  ScriptEnd end = ScriptEnd::Stop;

  void validate() const {
    if (waypoints.empty()) throw ConfigError("pedestrian script needs at least one waypoint");
    const std::size_t segs = waypoints.size() - 1 + (end == ScriptEnd::Loop && waypoints.size() > 1 ? 1 : 0);
    if (speeds.size() != segs && !(speeds.size() == 1 && segs >= 1))
      throw ConfigError("pedestrian script: need one speed per segment");
    for (double s : speeds)
      if (!(s > 0.0) || s > kMaxPedestrianSpeed) throw ConfigError("pedestrian speed must be in (0, 2] m/s");
    if (!(radius > 0.0)) throw ConfigError("pedestrian radius must be positive");
  }
};

struct Pedestrian {
  Vec2 position;
  Vec2 velocity;
  double radius = 0.25;
};

namespace detail {

struct Leg {
  Vec2 from;
  Vec2 to;
  double speed;
  double duration;
};

inline std::vector<Leg> script_legs(const PedestrianScript& s) {
  std::vector<Leg> legs;
  const auto& w = s.waypoints;
  auto speed_of = [&](std::size_t k) { return s.speeds.size() == 1 ? s.speeds[0] : s.speeds[k]; };
  for (std::size_t k = 0; k + 1 < w.size(); ++k)
    legs.push_back({w[k], w[k + 1], speed_of(k), distance(w[k], w[k + 1]) / speed_of(k)});
  if (s.end == ScriptEnd::Loop && w.size() > 1)
    legs.push_back({w.back(), w.front(), speed_of(w.size() - 1), distance(w.back(), w.front()) / speed_of(w.size() - 1)});
  if (s.end == ScriptEnd::PingPong)
    for (std::size_t k = legs.size(); k-- > 0;) legs.push_back({legs[k].to, legs[k].from, legs[k].speed, legs[k].duration});
  return legs;
}

}  // namespace detail

// Closed-form pedestrian state at absolute time t.
inline Pedestrian pedestrian_at(const PedestrianScript& s, double t) {
  Pedestrian p{s.waypoints.front(), {0.0, 0.0}, s.radius};
  double tau = t - s.start_time;
  if (tau <= 0.0 || s.waypoints.size() < 2) return p;
  const auto legs = detail::script_legs(s);
  double cycle = 0.0;
  for (const auto& l : legs) cycle += l.duration;
  if (cycle <= 0.0) return p;
  if (s.end == ScriptEnd::Stop) {
    if (tau >= cycle) {
      p.position = s.waypoints.back();
      return p;
    }
  } else {
    tau = std::fmod(tau, cycle);
  }
  for (const auto& l : legs) {
    if (tau < l.duration) {
      const Vec2 dir = (1.0 / distance(l.from, l.to)) * (l.to - l.from);
      p.position = l.from + (l.speed * tau) * dir;
      p.velocity = l.speed * dir;
      return p;
    }
    tau -= l.duration;
  }
  p.position = legs.back().to;
  return p;
}

}  // namespace lenav::sim
