#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "lenav/core/error.hpp"
#include "lenav/core/hyperparams.hpp"
#include "lenav/planner/path.hpp"
#include "lenav/sim/world.hpp"

namespace lenav::planner {

// No admissible velocity sample; the caller decides on recovery.
class TrappedError : public Error {
 public:
  using Error::Error;
};

struct DwaConfig {
  int v_samples = 21;
  int w_samples = 41;
  double horizon = 1.5;
  double rollout_step = 0.1;
  double control_period = 0.1;
  double lookahead = 2.0;
  // Effective weight = factor * hyperparameter; velocity weight is fixed.
  double distance_bias_factor = 0.05;
  double occdist_factor = 20.0;
  double velocity_weight = 1.0;
  // Clearance differences smaller than this are not stretched to the full [0, 1] range.
  double clearance_range_floor = 0.25;
};

struct VelocityRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct DynamicWindow {
  VelocityRange v;
  VelocityRange w;
};

// Reachable velocities within one period under the acceleration limits.
// max_vel_trans is tied to max_vel_x, so the translational cap is max_vel_x.
inline DynamicWindow dynamic_window(const sim::RobotState& state, const HyperparamVector& h, double dt) {
  lenav::detail::check_family(h.family, PlannerFamily::DWA);
  if (!(dt > 0.0)) throw RangeError("dynamic_window: dt must be positive");
  const double max_vel_trans = h[hp::max_vel_x];
  DynamicWindow win;
  win.v.lo = std::max(0.0, state.v - h[hp::acc_lim_x] * dt);
  win.v.hi = std::min(max_vel_trans, state.v + h[hp::acc_lim_x] * dt);
  if (win.v.hi < win.v.lo) win.v.hi = win.v.lo = std::clamp(state.v, 0.0, max_vel_trans);
  win.w.lo = std::max(-h[hp::max_vel_theta], state.w - h[hp::acc_lim_theta] * dt);
  win.w.hi = std::min(h[hp::max_vel_theta], state.w + h[hp::acc_lim_theta] * dt);
  if (win.w.hi < win.w.lo) win.w.hi = win.w.lo = std::clamp(state.w, -h[hp::max_vel_theta], h[hp::max_vel_theta]);
  return win;
}

struct VelocitySample {
  double v = 0.0;
  double w = 0.0;
  std::vector<Pose> rollout;
  double min_clearance = 0.0;
  bool admissible = false;
};

struct DwaObjectiveTerms {
  double heading = 0.0;
  double clearance = 0.0;
  double velocity = 0.0;
  double path = 0.0;
};

struct DwaWeights {
  double heading = 0.0;
  double path = 0.0;
  double clearance = 0.0;
  double velocity = 0.0;

  DwaWeights scaled(double s) const { return {heading * s, path * s, clearance * s, velocity * s}; }
  double sum() const { return heading + path + clearance + velocity; }
};

inline DwaWeights dwa_weights(const HyperparamVector& h, const DwaConfig& cfg = {}) {
  lenav::detail::check_family(h.family, PlannerFamily::DWA);
  return {cfg.distance_bias_factor * h[hp::dwa::goal_distance_bias],
          cfg.distance_bias_factor * h[hp::dwa::path_distance_bias], cfg.occdist_factor * h[hp::dwa::occdist_scale],
          cfg.velocity_weight};
}

inline VelocitySample make_sample(const sim::WorldState& world, const HyperparamVector& h, double v, double w,
                                  const DwaConfig& cfg) {
  VelocitySample s{v, w, {}, std::numeric_limits<double>::infinity(), true};
  const int steps = static_cast<int>(std::lround(cfg.horizon / cfg.rollout_step));
  s.rollout.reserve(static_cast<std::size_t>(steps));
  for (int k = 1; k <= steps; ++k) {
    const double t = k * cfg.rollout_step;
    const Vec2 p = sim::arc_position(world.robot.pose, v, w, t);
    s.rollout.push_back({p.x, p.y, wrap_angle(world.robot.pose.theta + w * t)});
    s.min_clearance = std::min(s.min_clearance, sim::robot_clearance(world, p, t));
  }
  if (s.min_clearance < 0.0) s.admissible = false;
  // Must be able to stop before the closest approach.
  if (v * v > 2.0 * h[hp::acc_lim_x] * std::max(s.min_clearance, 0.0)) s.admissible = false;
  return s;
}

inline Pose dwa_local_goal(const sim::WorldState& world, const DwaConfig& cfg) {
  if (distance(world.robot.pose.position(), world.goal.position()) <= cfg.lookahead) return world.goal;
  return lookahead_pose(world.path, world.robot.pose.position(), cfg.lookahead);
}

// Raw (pre-normalization) terms; path is the negated mean distance to the reference line.
inline DwaObjectiveTerms score_sample(const VelocitySample& sample, const sim::WorldState& world,
                                      const HyperparamVector& h, const Pose& local_goal) {
  DwaObjectiveTerms t;
  const Pose end = sample.rollout.empty() ? world.robot.pose : sample.rollout.back();
  // Near the final goal the forward point would overshoot it and stall the approach, so use the rollout end.
  const bool final_goal = local_goal.position() == world.goal.position();
  const double fpd = final_goal ? 0.0 : h[hp::dwa::forward_point_distance];
  const Vec2 fp{end.x + fpd * std::cos(end.theta), end.y + fpd * std::sin(end.theta)};
  const Vec2 to_goal = local_goal.position() - fp;
  const double bearing = (to_goal.x == 0.0 && to_goal.y == 0.0) ? 0.0 : wrap_angle(std::atan2(to_goal.y, to_goal.x) - end.theta);
  t.heading = 1.0 - std::abs(bearing) / std::numbers::pi;
  t.clearance = std::min(1.0, std::max(sample.min_clearance, 0.0) / h[hp::inflation_radius]);
  t.velocity = sample.v / h[hp::max_vel_x];
  double dsum = 0.0;
  for (const Pose& p : sample.rollout) dsum += distance_to_path(world.path, p.position());
  t.path = sample.rollout.empty() ? 0.0 : -dsum / static_cast<double>(sample.rollout.size());
  return t;
}

namespace detail {
// Min-max over the admissible set, dividing by at least `floor`; a constant term maps to 0 everywhere.
inline void normalize_term(std::vector<DwaObjectiveTerms>& terms, const std::vector<VelocitySample>& samples,
                           double DwaObjectiveTerms::*field, double floor = 0.0) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < terms.size(); ++i)
    if (samples[i].admissible) {
      lo = std::min(lo, terms[i].*field);
      hi = std::max(hi, terms[i].*field);
    }
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (!samples[i].admissible || !(hi > lo))
      terms[i].*field = 0.0;
    else
      terms[i].*field = (terms[i].*field - lo) / std::max(hi - lo, floor);
  }
}
}  // namespace detail

inline void normalize_terms(std::vector<DwaObjectiveTerms>& terms, const std::vector<VelocitySample>& samples,
                            double clearance_floor = 0.0) {
  detail::normalize_term(terms, samples, &DwaObjectiveTerms::heading);
  detail::normalize_term(terms, samples, &DwaObjectiveTerms::clearance, clearance_floor);
  detail::normalize_term(terms, samples, &DwaObjectiveTerms::velocity);
  detail::normalize_term(terms, samples, &DwaObjectiveTerms::path);
}

inline double combine(const DwaObjectiveTerms& t, const DwaWeights& w) {
  return w.heading * t.heading + w.path * t.path + w.clearance * t.clearance + w.velocity * t.velocity;
}

// Strict preference order: higher score, then lower |w|, lower v, lower w.
// Scores closer than `tol` count as tied.
inline bool dwa_prefers(double score_a, const VelocitySample& a, double score_b, const VelocitySample& b, double tol) {
  if (score_a > score_b + tol) return true;
  if (score_b > score_a + tol) return false;
  if (std::abs(a.w) != std::abs(b.w)) return std::abs(a.w) < std::abs(b.w);
  if (a.v != b.v) return a.v < b.v;
  return a.w < b.w;
}

inline double dwa_tie_tolerance(const DwaWeights& w) { return 1e-12 * w.sum(); }

struct DwaEvaluation {
  DynamicWindow window;
  Pose local_goal;
  std::vector<VelocitySample> samples;
  std::vector<DwaObjectiveTerms> terms;  // normalized
  std::vector<double> scores;
  std::optional<std::size_t> best;
};

inline double grid_value(const VelocityRange& r, int i, int n) {
  if (n <= 1) return 0.5 * (r.lo + r.hi);
  // The last sample is pinned to hi; interpolation can land one ulp outside the window.
  if (i == n - 1) return r.hi;
  return std::min(r.hi, r.lo + (r.hi - r.lo) * static_cast<double>(i) / static_cast<double>(n - 1));
}

inline DwaEvaluation evaluate_window(const sim::WorldState& world, const HyperparamVector& h, const DwaWeights& weights,
                                     const DwaConfig& cfg = {}) {
  DwaEvaluation ev;
  ev.window = dynamic_window(world.robot, h, cfg.control_period);
  ev.local_goal = dwa_local_goal(world, cfg);
  const std::size_t n = static_cast<std::size_t>(cfg.v_samples) * static_cast<std::size_t>(cfg.w_samples);
  ev.samples.reserve(n);
  ev.terms.reserve(n);
  for (int iv = 0; iv < cfg.v_samples; ++iv)
    for (int iw = 0; iw < cfg.w_samples; ++iw) {
      ev.samples.push_back(make_sample(world, h, grid_value(ev.window.v, iv, cfg.v_samples),
                                       grid_value(ev.window.w, iw, cfg.w_samples), cfg));
      ev.terms.push_back(score_sample(ev.samples.back(), world, h, ev.local_goal));
    }
  normalize_terms(ev.terms, ev.samples, cfg.clearance_range_floor);
  ev.scores.resize(n, -std::numeric_limits<double>::infinity());
  const double tol = dwa_tie_tolerance(weights);
  for (std::size_t i = 0; i < n; ++i) {
    if (!ev.samples[i].admissible) continue;
    ev.scores[i] = combine(ev.terms[i], weights);
    if (!ev.best || dwa_prefers(ev.scores[i], ev.samples[i], ev.scores[*ev.best], ev.samples[*ev.best], tol))
      ev.best = i;
  }
  return ev;
}

struct VelocityCommand {
  double v = 0.0;
  double w = 0.0;
};

inline VelocityCommand select_command(const sim::WorldState& world, const HyperparamVector& h, const DwaConfig& cfg = {}) {
  const auto ev = evaluate_window(world, h, dwa_weights(h, cfg), cfg);
  if (!ev.best) throw TrappedError("DWA: no admissible velocity sample");
  return {ev.samples[*ev.best].v, ev.samples[*ev.best].w};
}

}  // namespace lenav::planner
