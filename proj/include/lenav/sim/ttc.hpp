#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "lenav/core/geometry.hpp"

namespace lenav::sim {

inline constexpr double kTtcHorizon = 10.0;

// Obstacle disc extrapolated at constant velocity.
struct MovingDisc {
  Vec2 position;
  Vec2 velocity;
  double radius = 0.0;
};

// Unicycle position after holding (v, w) for time t from pose. Written with the
// half-angle chord so small |w| does not cancel catastrophically.
inline Vec2 arc_position(const Pose& pose, double v, double w, double t) {
  const double half = 0.5 * w * t;
  const double sinc = std::abs(half) < 1e-8 ? 1.0 - half * half / 6.0 : std::sin(half) / half;
  const double chord = v * t * sinc;
  const double mid = pose.theta + half;
  return {pose.x + chord * std::cos(mid), pose.y + chord * std::sin(mid)};
}

// First time the robot disc, holding (v, w), touches any obstacle disc; +inf if
// no contact within the horizon. Conservative advancement on the clearance,
// which changes no faster than |v| plus the fastest obstacle speed.
inline double time_to_collision(const Pose& pose, double v, double w, double robot_radius,
                                std::span<const MovingDisc> obstacles, double horizon = kTtcHorizon) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  constexpr double contact_tol = 1e-9;
  constexpr double min_step = 1e-4;
  if (obstacles.empty()) return inf;

  double max_obstacle_speed = 0.0;
  for (const auto& o : obstacles) max_obstacle_speed = std::max(max_obstacle_speed, norm(o.velocity));
  const double closing_bound = std::abs(v) + max_obstacle_speed;

  auto clearance = [&](double t) {
    const Vec2 p = arc_position(pose, v, w, t);
    double d = inf;
    for (const auto& o : obstacles) d = std::min(d, distance(p, o.position + t * o.velocity) - o.radius - robot_radius);
    return d;
  };

  double t = 0.0;
  while (t <= horizon) {
    const double d = clearance(t);
    if (d <= contact_tol) return t;
    if (closing_bound <= 0.0) return inf;
    t += std::max(d / closing_bound, min_step);
  }
  return inf;
}

}  // namespace lenav::sim
