#pragma once

#include <cmath>
#include <limits>
#include <span>

#include "lenav/core/geometry.hpp"

namespace lenav::planner {

struct PathProjection {
  std::size_t segment = 0;
  double t = 0.0;  // fraction along the segment
  double distance = 0.0;
};

inline PathProjection project_onto_path(std::span<const Vec2> path, Vec2 p) {
  PathProjection best{0, 0.0, std::numeric_limits<double>::infinity()};
  if (path.size() == 1) return {0, 0.0, distance(p, path[0])};
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const Vec2 a = path[k], ab = path[k + 1] - path[k];
    const double len2 = dot(ab, ab);
    double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    const double d = distance(p, a + t * ab);
    if (d < best.distance) best = {k, t, d};
  }
  return best;
}

inline double distance_to_path(std::span<const Vec2> path, Vec2 p) {
  if (path.empty()) return 0.0;
  return project_onto_path(path, p).distance;
}

// Point `ahead` metres further along the path from the projection of p,
// with the heading of the segment it lies on.
inline Pose lookahead_pose(std::span<const Vec2> path, Vec2 p, double ahead) {
  if (path.size() < 2) return {path[0].x, path[0].y, 0.0};
  const PathProjection proj = project_onto_path(path, p);
  std::size_t k = proj.segment;
  Vec2 cur = path[k] + proj.t * (path[k + 1] - path[k]);
  double remaining = ahead;
  while (true) {
    const Vec2 seg_end = path[k + 1];
    const double left = distance(cur, seg_end);
    const Vec2 d = path[k + 1] - path[k];
    const double heading = std::atan2(d.y, d.x);
    if (remaining <= left) {
      const double len = norm(d);
      const Vec2 q = len > 0.0 ? cur + (remaining / len) * d : cur;
      return {q.x, q.y, heading};
    }
    remaining -= left;
    cur = seg_end;
    if (k + 2 >= path.size()) return {seg_end.x, seg_end.y, heading};
    ++k;
  }
}

}  // namespace lenav::planner
