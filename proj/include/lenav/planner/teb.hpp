#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <vector>

#include "lenav/core/error.hpp"
#include "lenav/core/hyperparams.hpp"
#include "lenav/planner/path.hpp"
#include "lenav/sim/world.hpp"

namespace lenav::planner {

class OptimizationError : public Error {
 public:
  using Error::Error;
};

struct TebConfig {
  double dt_min = 0.05;
  double w_goal = 1.0;
  double w_smooth = 1.0;
  double w_obs = 50.0;
  double w_dyn = 10.0;
  double nh_weight = 50.0;            // non-holonomic residual, folded into the smooth term
  double weight_max_vel_theta = 1.0;  // not tuned
  int iterations = 60;
  double lookahead = 2.0;
  double pose_spacing = 0.2;
  int max_poses = 16;
  double armijo = 1e-4;
};

struct Band {
  std::vector<Pose> poses;
  std::vector<double> dts;
};

struct TebCostBreakdown {
  double goal = 0.0;
  double smooth = 0.0;
  double obstacle = 0.0;
  double dynamic = 0.0;
  double time = 0.0;
  double total = 0.0;
};

inline std::ostream& operator<<(std::ostream& os, const TebCostBreakdown& c) {
  return os << "goal=" << c.goal << " smooth=" << c.smooth << " obstacle=" << c.obstacle << " dynamic=" << c.dynamic
            << " time=" << c.time << " total=" << c.total;
}

// Same layout as Band: d/dx, d/dy, d/dtheta per pose and d/ddt per interval.
struct BandGradient {
  std::vector<Pose> poses;
  std::vector<double> dts;
};

// Everything the cost needs from the world, gathered once per plan.
struct TebProblem {
  std::vector<Vec2> static_points;
  double static_radius = 0.0;
  std::vector<sim::MovingDisc> movers;
  double robot_radius = 0.3;
  double start_v = 0.0;
  double start_w = 0.0;
  Pose goal;
};

inline TebProblem make_teb_problem(const sim::WorldState& world, const Band& band, double search_margin) {
  TebProblem p;
  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin, xmax = -xmin, ymax = -xmin;
  for (const auto& q : band.poses) {
    xmin = std::min(xmin, q.x);
    xmax = std::max(xmax, q.x);
    ymin = std::min(ymin, q.y);
    ymax = std::max(ymax, q.y);
  }
  const Vec2 c{0.5 * (xmin + xmax), 0.5 * (ymin + ymax)};
  const double half = 0.5 * std::max(xmax - xmin, ymax - ymin) + search_margin;
  p.static_points = sim::local_obstacle_points(*world.map, c, half);
  p.static_radius = 0.5 * world.map->grid.resolution();
  for (const auto& ped : world.pedestrians) p.movers.push_back({ped.position, ped.velocity, ped.radius});
  p.robot_radius = world.robot.radius;
  p.start_v = world.robot.v;
  p.start_w = world.robot.w;
  p.goal = band.poses.empty() ? world.goal : band.poses.back();
  return p;
}

// Straight band start -> goal with headings along the segment.
inline Band init_band(const Pose& start, const Pose& goal, int n, double max_vel_x, double dt_min = TebConfig{}.dt_min) {
  if (n < 2) throw RangeError("init_band: need at least 2 poses");
  Band b;
  const Vec2 d = goal.position() - start.position();
  const double len = norm(d);
  if (len == 0.0) {
    b.poses = {start, goal};
    b.dts = {dt_min};
    return b;
  }
  const double heading = std::atan2(d.y, d.x);
  const double dt = std::max(dt_min, (len / (n - 1)) / (0.5 * max_vel_x));
  for (int i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / (n - 1);
    b.poses.push_back({start.x + s * d.x, start.y + s * d.y, heading});
  }
  b.poses.front() = start;
  b.poses.back() = goal;
  b.dts.assign(static_cast<std::size_t>(n - 1), dt);
  return b;
}

namespace detail {

inline double hinge_sq(double x, double limit, double& dpen_dx) {
  const double excess = std::abs(x) - limit;
  if (excess <= 0.0) {
    dpen_dx = 0.0;
    return 0.0;
  }
  dpen_dx = 2.0 * excess * (x >= 0.0 ? 1.0 : -1.0);
  return excess * excess;
}

}  // namespace detail

// Weighted TEB cost and, when `grad` is non-null, its analytic gradient.
inline TebCostBreakdown teb_cost(const Band& band, const TebProblem& prob, const HyperparamVector& h, const TebConfig& cfg,
                                 BandGradient* grad = nullptr) {
  lenav::detail::check_family(h.family, PlannerFamily::TEB);
  const std::size_t n = band.poses.size();
  if (n < 2 || band.dts.size() != n - 1) throw RangeError("band: need >= 2 poses and poses-1 intervals");
  for (double dt : band.dts)
    if (!(dt > 0.0)) throw RangeError("band: time intervals must be positive");
  const std::size_t m = n - 1;
  const auto& P = band.poses;
  const auto& T = band.dts;

  std::vector<double> gx(n, 0.0), gy(n, 0.0), gth(n, 0.0), gdt(m, 0.0);
  TebCostBreakdown c;

  // Goal deviation (zero while the last pose is pinned to the goal).
  {
    const double ex = P[m].x - prob.goal.x, ey = P[m].y - prob.goal.y, et = wrap_angle(P[m].theta - prob.goal.theta);
    c.goal = ex * ex + ey * ey + et * et;
    gx[m] += cfg.w_goal * 2.0 * ex;
    gy[m] += cfg.w_goal * 2.0 * ey;
    gth[m] += cfg.w_goal * 2.0 * et;
  }

  std::vector<double> cs(n), sn(n);
  for (std::size_t i = 0; i < n; ++i) {
    cs[i] = std::cos(P[i].theta);
    sn[i] = std::sin(P[i].theta);
  }

  // Smoothness: heading change plus the non-holonomic residual per segment.
  std::vector<double> dx(m), dy(m), dth(m);
  for (std::size_t i = 0; i < m; ++i) {
    dx[i] = P[i + 1].x - P[i].x;
    dy[i] = P[i + 1].y - P[i].y;
    dth[i] = wrap_angle(P[i + 1].theta - P[i].theta);
    const double nh = (cs[i] + cs[i + 1]) * dy[i] - (sn[i] + sn[i + 1]) * dx[i];
    c.smooth += dth[i] * dth[i] + cfg.nh_weight * nh * nh;
    const double ws = cfg.w_smooth;
    gth[i + 1] += ws * 2.0 * dth[i];
    gth[i] -= ws * 2.0 * dth[i];
    const double g = ws * 2.0 * cfg.nh_weight * nh;
    const double ddx = -(sn[i] + sn[i + 1]), ddy = cs[i] + cs[i + 1];
    gx[i + 1] += g * ddx;
    gx[i] -= g * ddx;
    gy[i + 1] += g * ddy;
    gy[i] -= g * ddy;
    gth[i] += g * (-sn[i] * dy[i] - cs[i] * dx[i]);
    gth[i + 1] += g * (-sn[i + 1] * dy[i] - cs[i + 1] * dx[i]);
  }

  // Obstacles: nearest static point and every mover, hinge at d_safe.
  const double d_safe = h[hp::inflation_radius];
  std::vector<double> g_time(n, 0.0);  // d cost / d (absolute time of pose i)
  double t_abs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) t_abs += T[i - 1];
    const Vec2 p = P[i].position();
    if (!prob.static_points.empty()) {
      double best = std::numeric_limits<double>::infinity();
      Vec2 best_c{};
      for (const Vec2& q : prob.static_points) {
        const Vec2 r = p - q;
        const double d2 = dot(r, r);
        if (d2 < best) {
          best = d2;
          best_c = q;
        }
      }
      const double dist = std::sqrt(best);
      const double d = dist - prob.static_radius - prob.robot_radius;
      if (d < d_safe) {
        const double e = d_safe - d;
        c.obstacle += e * e;
        if (dist > 0.0) {
          const double k = cfg.w_obs * -2.0 * e / dist;
          gx[i] += k * (p.x - best_c.x);
          gy[i] += k * (p.y - best_c.y);
        }
      }
    }
    for (const auto& o : prob.movers) {
      const Vec2 q = o.position + t_abs * o.velocity;
      const Vec2 r = p - q;
      const double dist = norm(r);
      const double d = dist - o.radius - prob.robot_radius;
      if (d < d_safe) {
        const double e = d_safe - d;
        c.obstacle += e * e;
        if (dist > 0.0) {
          const double k = cfg.w_obs * -2.0 * e / dist;
          gx[i] += k * r.x;
          gy[i] += k * r.y;
          g_time[i] += k * -dot(r, o.velocity);
        }
      }
    }
  }
  // t_i = sum_{k<i} dt_k
  {
    double suffix = 0.0;
    for (std::size_t i = n; i-- > 1;) {
      suffix += g_time[i];
      gdt[i - 1] += suffix;
    }
  }

  // Kinodynamic soft constraints.
  std::vector<double> v(m), w(m), gv(m, 0.0), gw(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    v[i] = (dx[i] * cs[i] + dy[i] * sn[i]) / T[i];
    w[i] = dth[i] / T[i];
  }
  const double wd = cfg.w_dyn;
  double dpen = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    c.dynamic += h[hp::teb::weight_max_vel_x] * detail::hinge_sq(v[i], h[hp::max_vel_x], dpen);
    gv[i] += wd * h[hp::teb::weight_max_vel_x] * dpen;
    c.dynamic += cfg.weight_max_vel_theta * detail::hinge_sq(w[i], h[hp::max_vel_theta], dpen);
    gw[i] += wd * cfg.weight_max_vel_theta * dpen;
  }
  // Accelerations, the first one relative to the robot's current velocity.
  for (std::size_t i = 0; i < m; ++i) {
    double a, alpha, tau;
    if (i == 0) {
      tau = T[0];
      a = (v[0] - prob.start_v) / tau;
      alpha = (w[0] - prob.start_w) / tau;
    } else {
      tau = 0.5 * (T[i - 1] + T[i]);
      a = (v[i] - v[i - 1]) / tau;
      alpha = (w[i] - w[i - 1]) / tau;
    }
    c.dynamic += h[hp::teb::weight_acc_lim_x] * detail::hinge_sq(a, h[hp::acc_lim_x], dpen);
    const double ga = wd * h[hp::teb::weight_acc_lim_x] * dpen;
    c.dynamic += h[hp::teb::weight_acc_lim_theta] * detail::hinge_sq(alpha, h[hp::acc_lim_theta], dpen);
    const double galpha = wd * h[hp::teb::weight_acc_lim_theta] * dpen;
    gv[i] += ga / tau;
    gw[i] += galpha / tau;
    if (i == 0) {
      gdt[0] += (ga * a + galpha * alpha) * (-1.0 / tau);
    } else {
      gv[i - 1] -= ga / tau;
      gw[i - 1] -= galpha / tau;
      const double gt = (ga * a + galpha * alpha) * (-0.5 / tau);
      gdt[i - 1] += gt;
      gdt[i] += gt;
    }
  }
  // Chain v_i, w_i back to poses and intervals.
  for (std::size_t i = 0; i < m; ++i) {
    const double inv = 1.0 / T[i];
    gx[i + 1] += gv[i] * cs[i] * inv;
    gx[i] -= gv[i] * cs[i] * inv;
    gy[i + 1] += gv[i] * sn[i] * inv;
    gy[i] -= gv[i] * sn[i] * inv;
    gth[i] += gv[i] * (-dx[i] * sn[i] + dy[i] * cs[i]) * inv;
    gdt[i] += gv[i] * (-v[i] * inv);
    gth[i + 1] += gw[i] * inv;
    gth[i] -= gw[i] * inv;
    gdt[i] += gw[i] * (-w[i] * inv);
  }

  for (std::size_t i = 0; i < m; ++i) {
    c.time += T[i];
    gdt[i] += h[hp::teb::weight_optimaltime];
  }

  c.total = cfg.w_goal * c.goal + cfg.w_smooth * c.smooth + cfg.w_obs * c.obstacle + cfg.w_dyn * c.dynamic +
            h[hp::teb::weight_optimaltime] * c.time;

  if (grad) {
    grad->poses.resize(n);
    for (std::size_t i = 0; i < n; ++i) grad->poses[i] = {gx[i], gy[i], gth[i]};
    grad->dts = std::move(gdt);
  }
  return c;
}

inline TebCostBreakdown total_cost(const Band& band, const sim::WorldState& world, const HyperparamVector& h,
                                   const TebConfig& cfg = {}) {
  return teb_cost(band, make_teb_problem(world, band, h[hp::inflation_radius] + world.robot.radius + 0.5), h, cfg);
}

struct OptimizationTrace {
  std::vector<double> costs;  // cost after each accepted iteration, starting with the initial cost
  std::vector<TebCostBreakdown> breakdowns;
};

inline void write_trace_csv(std::ostream& os, const OptimizationTrace& trace) {
  os << "iteration,goal,smooth,obstacle,dynamic,time,total\n";
  for (std::size_t k = 0; k < trace.breakdowns.size(); ++k) {
    const auto& b = trace.breakdowns[k];
    os << k << ',' << b.goal << ',' << b.smooth << ',' << b.obstacle << ',' << b.dynamic << ',' << b.time << ','
       << b.total << '\n';
  }
}

// Projected gradient descent with Armijo backtracking over interior poses and
// all intervals (clamped to dt_min). Endpoints stay pinned.
inline Band optimize_band(Band band, const TebProblem& prob, const HyperparamVector& h, int iters,
                          const TebConfig& cfg = {}, OptimizationTrace* trace = nullptr) {
  BandGradient g;
  auto check = [](const TebCostBreakdown& c) {
    if (!std::isfinite(c.total)) {
      std::ostringstream os;
      os << "TEB: non-finite cost (" << c << ")";
      throw OptimizationError(os.str());
    }
  };
  TebCostBreakdown cur = teb_cost(band, prob, h, cfg, &g);
  check(cur);
  if (trace) {
    trace->costs.push_back(cur.total);
    trace->breakdowns.push_back(cur);
  }
  const std::size_t n = band.poses.size();
  double step = 1e-2;
  Band cand = band;
  for (int it = 0; it < iters; ++it) {
    g.poses.front() = g.poses.back() = Pose{};
    bool accepted = false;
    while (step > 1e-12) {
      double decrease = 0.0;
      for (std::size_t i = 1; i + 1 < n; ++i) {
        cand.poses[i].x = band.poses[i].x - step * g.poses[i].x;
        cand.poses[i].y = band.poses[i].y - step * g.poses[i].y;
        const double th = band.poses[i].theta - step * g.poses[i].theta;
        cand.poses[i].theta = wrap_angle(th);
        decrease += g.poses[i].x * (band.poses[i].x - cand.poses[i].x) +
                    g.poses[i].y * (band.poses[i].y - cand.poses[i].y) + g.poses[i].theta * (band.poses[i].theta - th);
      }
      for (std::size_t i = 0; i + 1 < n; ++i) {
        cand.dts[i] = std::max(cfg.dt_min, band.dts[i] - step * g.dts[i]);
        decrease += g.dts[i] * (band.dts[i] - cand.dts[i]);
      }
      const TebCostBreakdown next = teb_cost(cand, prob, h, cfg);
      check(next);
      if (next.total <= cur.total - cfg.armijo * decrease) {
        accepted = true;
        std::swap(band, cand);
        cur = teb_cost(band, prob, h, cfg, &g);
        step = std::min(step * 2.0, 1.0);
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (trace) {
      trace->costs.push_back(cur.total);
      trace->breakdowns.push_back(cur);
    }
  }
  return band;
}

inline Band optimize_band(const Band& band, const sim::WorldState& world, const HyperparamVector& h, int iters,
                          const TebConfig& cfg = {}, OptimizationTrace* trace = nullptr) {
  return optimize_band(band, make_teb_problem(world, band, h[hp::inflation_radius] + world.robot.radius + 0.5), h,
                       iters, cfg, trace);
}

struct TebCommand {
  double v = 0.0;
  double w = 0.0;
};

// First segment's velocities, clamped; reverse motion is allowed.
inline TebCommand extract_command(const Band& band, const HyperparamVector& h) {
  if (band.poses.size() < 2 || band.dts.empty()) throw RangeError("extract_command: band too short");
  const Pose& a = band.poses[0];
  const Pose& b = band.poses[1];
  const double dt = band.dts[0];
  const double v = ((b.x - a.x) * std::cos(a.theta) + (b.y - a.y) * std::sin(a.theta)) / dt;
  const double w = wrap_angle(b.theta - a.theta) / dt;
  return {std::clamp(v, -h[hp::max_vel_x], h[hp::max_vel_x]), std::clamp(w, -h[hp::max_vel_theta], h[hp::max_vel_theta])};
}

struct TebPlan {
  Band band;
  TebCommand command;
  TebCostBreakdown cost;
};

// One planning tick: fresh straight band to the local goal, optimized, first command extracted.
inline TebPlan plan_teb(const sim::WorldState& world, const HyperparamVector& h, const TebConfig& cfg = {}) {
  lenav::detail::check_family(h.family, PlannerFamily::TEB);
  const Pose start = world.robot.pose;
  Pose goal = world.goal;
  if (distance(start.position(), goal.position()) > cfg.lookahead)
    goal = lookahead_pose(world.path, start.position(), cfg.lookahead);
  const double len = distance(start.position(), goal.position());
  const int n = std::clamp(static_cast<int>(std::lround(len / cfg.pose_spacing)) + 1, 3, cfg.max_poses);
  Band band = init_band(start, goal, n, h[hp::max_vel_x], cfg.dt_min);
  const TebProblem prob = make_teb_problem(world, band, h[hp::inflation_radius] + world.robot.radius + 0.5);
  band = optimize_band(std::move(band), prob, h, cfg.iterations, cfg);
  TebPlan plan{band, extract_command(band, h), teb_cost(band, prob, h, cfg)};
  return plan;
}

}  // namespace lenav::planner
