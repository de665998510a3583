#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lenav/core/error.hpp"
#include "lenav/core/hyperparams.hpp"
#include "lenav/core/random.hpp"
#include "lenav/planner/dwa.hpp"
#include "lenav/planner/teb.hpp"
#include "lenav/scene/mllm.hpp"
#include "lenav/scene/rating.hpp"
#include "lenav/sim/runlog.hpp"
#include "lenav/sim/world.hpp"

namespace lenav::nav {

// Ratings received so far, one slot per rating period; lost frames are invalid slots.
struct RatingHistory {
  std::vector<scene::SceneRating> ratings;
  std::vector<std::uint8_t> valid;

  std::size_t size() const { return ratings.size(); }
  void push(const scene::SceneRating& r, bool ok) {
    ratings.push_back(r);
    valid.push_back(ok ? 1 : 0);
  }

  // Window of `slots` entries ending at index `end`; slots before the start are invalid.
  scene::ConditionWindow window(std::size_t end, std::size_t slots = scene::window_slots()) const {
    scene::ConditionWindow w;
    w.ratings.resize(slots);
    w.valid.assign(slots, 0);
    for (std::size_t k = 0; k < slots; ++k) {
      const std::size_t back = slots - 1 - k;
      if (back <= end && end - back < ratings.size()) {
        w.ratings[k] = ratings[end - back];
        w.valid[k] = valid[end - back];
      }
    }
    return w;
  }
  scene::ConditionWindow latest_window(std::size_t slots = scene::window_slots()) const {
    if (ratings.empty()) throw RangeError("empty rating history");
    return window(ratings.size() - 1, slots);
  }
};

// Called once per rating slot; nullopt keeps the current hyperparameters.
using Tuner = std::function<std::optional<HyperparamVector>(const RatingHistory&)>;

inline Tuner fixed_tuner() {
  return [](const RatingHistory&) { return std::optional<HyperparamVector>{}; };
}

// What the rater saw: enough to recompute the ground-truth rating.
struct Snapshot {
  double time = 0.0;
  sim::RobotState robot;
  std::vector<sim::Pedestrian> pedestrians;
};

inline nlohmann::json to_json(const Snapshot& s) {
  nlohmann::json peds = nlohmann::json::array();
  for (const auto& p : s.pedestrians) peds.push_back({p.position.x, p.position.y, p.velocity.x, p.velocity.y, p.radius});
  return {{"time", s.time},
          {"robot", {s.robot.pose.x, s.robot.pose.y, s.robot.pose.theta, s.robot.v, s.robot.w, s.robot.radius}},
          {"pedestrians", peds}};
}

inline Snapshot snapshot_from_json(const nlohmann::json& j) {
  Snapshot s;
  try {
    s.time = j.at("time").get<double>();
    const auto r = j.at("robot").get<std::vector<double>>();
    if (r.size() != 6) throw SchemaError("snapshot robot needs 6 values");
    s.robot.pose = {r[0], r[1], r[2]};
    s.robot.v = r[3];
    s.robot.w = r[4];
    s.robot.radius = r[5];
    for (const auto& p : j.at("pedestrians")) {
      const auto v = p.get<std::vector<double>>();
      if (v.size() != 5) throw SchemaError("snapshot pedestrian needs 5 values");
      s.pedestrians.push_back({{v[0], v[1]}, {v[2], v[3]}, v[4]});
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("snapshot: ") + e.what());
  }
  return s;
}

inline Snapshot snapshot_of(const sim::WorldState& w) { return {w.time, w.robot, w.pedestrians}; }

// World rebuilt from a snapshot on the scenario's static map.
inline sim::WorldState restore(const sim::Scenario& s, const Snapshot& snap) {
  sim::WorldState w = sim::make_world(s, snap.robot.pose);
  w.time = snap.time;
  w.robot = snap.robot;
  w.pedestrians = snap.pedestrians;
  return w;
}

struct RatingEvent {
  double time = 0.0;
  scene::SceneRating rating;
  bool valid = true;
  Snapshot snapshot;
  HyperparamVector applied;  // hyperparameters active after this event
};

enum class Outcome { Reached, Collided, Timeout };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Reached: return "reached";
    case Outcome::Collided: return "collided";
    case Outcome::Timeout: return "timeout";
  }
  return "unknown";
}

struct Episode {
  sim::RunLog log;
  Outcome outcome = Outcome::Timeout;
  std::vector<RatingEvent> ratings;
  int planner_failures = 0;  // ticks where the planner found nothing and the robot stopped

  bool success() const { return outcome == Outcome::Reached; }
};

struct EpisodeOptions {
  PlannerFamily family = PlannerFamily::DWA;
  HyperparamVector initial;
  double control_period = sim::kControlPeriod;
  double rating_period = scene::kRatingPeriod;
  std::optional<double> max_time;  // overrides the scenario timeout
  bool stop_at_collision = true;
  planner::DwaConfig dwa;
  planner::TebConfig teb;
  scene::RaterConfig rater;
  // When set, ratings come from the MLLM client off-loop instead of the ground-truth rater.
  scene::AsyncSceneRater* mllm = nullptr;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

// Same scenario, with pedestrian timing and positions jittered by the trial seed.
inline sim::Scenario perturb_scenario(sim::Scenario s, std::uint64_t seed, double time_jitter = 0.3,
                                      double position_jitter = 0.05) {
  Rng rng(mix_seed(seed, 0x5ce7));
  for (auto& p : s.pedestrians) {
    p.start_time = std::max(0.0, p.start_time + rng.uniform(-time_jitter, time_jitter));
    const Vec2 off{rng.uniform(-position_jitter, position_jitter), rng.uniform(-position_jitter, position_jitter)};
    for (auto& w : p.waypoints) w = w + off;
  }
  return s;
}

namespace detail {
inline planner::VelocityCommand plan(const sim::WorldState& w, const HyperparamVector& h, const EpisodeOptions& o,
                                     int& failures) {
  try {
    if (o.family == PlannerFamily::DWA) return planner::select_command(w, h, o.dwa);
    const auto p = planner::plan_teb(w, h, o.teb);
    return {p.command.v, p.command.w};
  } catch (const planner::TrappedError&) {
  } catch (const planner::OptimizationError&) {
  }
  ++failures;
  return {0.0, 0.0};
}
}  // namespace detail

// 10 Hz control with the planner, ratings every rating_period, tuner called on each new rating.
inline Episode run_episode(const sim::Scenario& scenario, const Tuner& tuner, const EpisodeOptions& o) {
  lenav::detail::check_family(o.initial.family, o.family);
  if (!is_valid(o.initial)) throw RangeError("initial hyperparameters invalid");
  Episode ep;
  ep.log.seed = o.seed;
  ep.log.config_hash = o.config_hash;
  HyperparamVector h = o.initial;
  sim::WorldState world = sim::make_world(scenario, scenario.start, h[hp::inflation_radius]);
  RatingHistory history;
  const double timeout = o.max_time.value_or(scenario.timeout);
  const long ticks_per_rating = std::max(1L, std::lround(o.rating_period / o.control_period));
  const long max_ticks = static_cast<long>(std::floor(timeout / o.control_period + 1e-9));
  double difficulty = std::numeric_limits<double>::quiet_NaN();

  auto accept = [&](const scene::SceneRating& r, bool ok, const Snapshot& snap) {
    history.push(r, ok);
    if (ok) difficulty = scene::scene_difficulty(r);
    if (auto next = tuner(history)) {
      lenav::detail::check_family(next->family, o.family);
      if (!is_valid(*next)) throw RangeError("tuner produced invalid hyperparameters");
      h = *next;
      sim::set_inflation_radius(world, h[hp::inflation_radius]);
    }
    ep.ratings.push_back({snap.time, r, ok, snap, h});
  };

  std::optional<Snapshot> pending_snap;
  for (long tick = 0;; ++tick) {
    if (tick % ticks_per_rating == 0) {
      const Snapshot snap = snapshot_of(world);
      if (o.mllm) {
        if (o.mllm->submit({scene::describe_scene(world), {}, "image/png", std::nullopt}, world.time))
          pending_snap = snap;
        else
          accept(scene::SceneRating{}, false, snap);
      } else {
        accept(scene::rate_ground_truth(world, o.rater), true, snap);
      }
    }
    if (o.mllm && pending_snap) {
      if (auto res = o.mllm->poll()) {
        if (const auto* r = std::get_if<scene::SceneRating>(&*res))
          accept(*r, true, *pending_snap);
        else
          accept(scene::SceneRating{}, false, *pending_snap);
        pending_snap.reset();
      }
    }

    const auto cmd = detail::plan(world, h, o, ep.planner_failures);
    sim::TickRecord rec;
    rec.time = world.time;
    rec.pose = world.robot.pose;
    rec.v = world.robot.v;
    rec.w = world.robot.w;
    rec.cmd_v = cmd.v;
    rec.cmd_w = cmd.w;
    rec.ttc = sim::ttc(world);
    rec.min_obstacle_distance = sim::robot_clearance(world, world.robot.pose.position());
    rec.collision = world.collided;
    rec.max_vel_x = h[hp::max_vel_x];
    rec.difficulty = difficulty;
    ep.log.ticks.push_back(rec);

    if (world.collided && o.stop_at_collision) {
      ep.outcome = Outcome::Collided;
      break;
    }
    if (distance(world.robot.pose.position(), scenario.goal.position()) <= scenario.goal_tolerance) {
      ep.outcome = world.collided ? Outcome::Collided : Outcome::Reached;
      break;
    }
    if (tick >= max_ticks) {
      ep.outcome = world.collided ? Outcome::Collided : Outcome::Timeout;
      break;
    }
    world = sim::step(world, cmd.v, cmd.w, o.control_period);
  }
  if (o.mllm) o.mllm->wait();
  return ep;
}

}  // namespace lenav::nav
