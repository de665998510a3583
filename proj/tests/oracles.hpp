#pragma once

// Test-only reference computations, written independently of the library code paths they check.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "lenav/planner/dwa.hpp"
#include "lenav/planner/teb.hpp"
#include "lenav/sim/grid.hpp"
#include "lenav/sim/ttc.hpp"

namespace lenav::oracle {

// All-pairs squared distance (in cells) from cell (i, j) to the nearest occupied cell.
inline std::int64_t brute_force_sq_distance(const sim::OccupancyGrid& g, int i, int j) {
  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  for (int b = 0; b < g.height(); ++b)
    for (int a = 0; a < g.width(); ++a)
      if (g.occupied(a, b)) {
        const std::int64_t dx = a - i, dy = b - j;
        best = std::min(best, dx * dx + dy * dy);
      }
  return best;
}

inline double brute_force_cost(const sim::OccupancyGrid& g, int i, int j, double radius) {
  if (g.occupied(i, j)) return 1.0;
  const std::int64_t s = brute_force_sq_distance(g, i, j);
  if (s == std::numeric_limits<std::int64_t>::max() || radius <= 0.0) return 0.0;
  const double d = g.resolution() * std::sqrt(static_cast<double>(s));
  return std::max(0.0, 1.0 - d / radius);
}

// Fine-step (1 ms) collision search with RK2 unicycle integration; returns the
// first sampled time with contact, or +inf.
inline double fine_step_ttc(double x, double y, double theta, double v, double w, double robot_radius,
                            const std::vector<sim::MovingDisc>& obstacles, double horizon = 10.0, double h = 1e-3) {
  const long steps = std::lround(horizon / h);
  for (long k = 0; k <= steps; ++k) {
    const double t = k * h;
    for (const auto& o : obstacles) {
      const double ox = o.position.x + t * o.velocity.x, oy = o.position.y + t * o.velocity.y;
      if (std::hypot(x - ox, y - oy) <= o.radius + robot_radius) return t;
    }
    const double th_mid = theta + 0.5 * h * w;
    x += h * v * std::cos(th_mid);
    y += h * v * std::sin(th_mid);
    theta += h * w;
  }
  return std::numeric_limits<double>::infinity();
}

// Independent argmax over the raw sample set: min-max per term over the
// admissible samples (clearance range floored), weighted sum, lexicographic tie-break.
inline std::size_t dwa_brute_force_best(const sim::WorldState& world, const HyperparamVector& h,
                                        const planner::DwaConfig& cfg) {
  const auto win = planner::dynamic_window(world.robot, h, cfg.control_period);
  const Pose goal = planner::dwa_local_goal(world, cfg);
  std::vector<planner::VelocitySample> samples;
  std::vector<planner::DwaObjectiveTerms> raw;
  for (int a = 0; a < cfg.v_samples; ++a)
    for (int b = 0; b < cfg.w_samples; ++b) {
      const double v = a == cfg.v_samples - 1 ? win.v.hi : std::min(win.v.hi, win.v.lo + (win.v.hi - win.v.lo) * a / (cfg.v_samples - 1));
      const double w = b == cfg.w_samples - 1 ? win.w.hi : std::min(win.w.hi, win.w.lo + (win.w.hi - win.w.lo) * b / (cfg.w_samples - 1));
      samples.push_back(planner::make_sample(world, h, v, w, cfg));
      raw.push_back(planner::score_sample(samples.back(), world, h, goal));
    }
  auto norm_of = [&](auto get, std::size_t i, double floor = 0.0) {
    double lo = 1e300, hi = -1e300;
    for (std::size_t k = 0; k < samples.size(); ++k)
      if (samples[k].admissible) {
        lo = std::min(lo, get(raw[k]));
        hi = std::max(hi, get(raw[k]));
      }
    return hi > lo ? (get(raw[i]) - lo) / std::max(hi - lo, floor) : 0.0;
  };
  const auto wts = planner::dwa_weights(h, cfg);
  std::size_t best = samples.size();
  double best_score = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].admissible) continue;
    const double s = wts.heading * norm_of([](auto& t) { return t.heading; }, i) +
                     wts.path * norm_of([](auto& t) { return t.path; }, i) +
                     wts.clearance * norm_of([](auto& t) { return t.clearance; }, i, cfg.clearance_range_floor) +
                     wts.velocity * norm_of([](auto& t) { return t.velocity; }, i);
    bool take = best == samples.size() || s > best_score + 1e-12 * wts.sum();
    if (!take && std::abs(s - best_score) <= 1e-12 * wts.sum()) {
      const auto& c = samples[best];
      const auto& x = samples[i];
      take = std::abs(x.w) < std::abs(c.w) || (std::abs(x.w) == std::abs(c.w) && (x.v < c.v || (x.v == c.v && x.w < c.w)));
    }
    if (take) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

// Central differences over every free variable; relative error on the whole gradient vector.
inline double teb_gradient_rel_error(const planner::Band& band, const planner::TebProblem& prob,
                                     const HyperparamVector& h) {
  const planner::TebConfig cfg;
  planner::BandGradient g;
  planner::teb_cost(band, prob, h, cfg, &g);
  std::vector<double> an, fd;
  const double eps = 1e-6;
  auto probe = [&](auto mutate) {
    planner::Band p = band, m = band;
    mutate(p, eps);
    mutate(m, -eps);
    fd.push_back((planner::teb_cost(p, prob, h, cfg).total - planner::teb_cost(m, prob, h, cfg).total) / (2 * eps));
  };
  for (std::size_t i = 0; i < band.poses.size(); ++i) {
    probe([i](planner::Band& b, double e) { b.poses[i].x += e; });
    an.push_back(g.poses[i].x);
    probe([i](planner::Band& b, double e) { b.poses[i].y += e; });
    an.push_back(g.poses[i].y);
    probe([i](planner::Band& b, double e) { b.poses[i].theta += e; });
    an.push_back(g.poses[i].theta);
  }
  for (std::size_t i = 0; i < band.dts.size(); ++i) {
    probe([i](planner::Band& b, double e) { b.dts[i] += e; });
    an.push_back(g.dts[i]);
  }
  double diff = 0.0, na = 0.0, nf = 0.0;
  for (std::size_t k = 0; k < an.size(); ++k) {
    diff += (an[k] - fd[k]) * (an[k] - fd[k]);
    na += an[k] * an[k];
    nf += fd[k] * fd[k];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nf), 1e-8});
}

}  // namespace lenav::oracle
