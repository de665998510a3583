#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "lenav/core/error.hpp"
#include "lenav/core/geometry.hpp"
#include "lenav/sim/grid.hpp"
#include "lenav/sim/pedestrian.hpp"
#include "lenav/sim/ttc.hpp"

namespace lenav::sim {

struct RobotState {
  Pose pose;
  double v = 0.0;
  double w = 0.0;
  double radius = 0.3;
};

struct StaticMap {
  explicit StaticMap(OccupancyGrid g) : grid(std::move(g)), field(grid) {}
  OccupancyGrid grid;
  DistanceField field;
};

struct WorldState {
  double time = 0.0;
  RobotState robot;
  std::vector<Pedestrian> pedestrians;
  std::shared_ptr<const std::vector<PedestrianScript>> scripts;
  std::shared_ptr<const StaticMap> map;
  std::shared_ptr<const Costmap> costmap;
  Pose goal;
  std::vector<Vec2> path;  // reference polyline start -> goal
  double local_window = 4.0;
  bool collided = false;
};

inline void set_inflation_radius(WorldState& world, double radius) {
  if (world.costmap && world.costmap->inflation_radius == radius) return;
  world.costmap = std::make_shared<const Costmap>(inflate(world.map->grid, world.map->field, radius));
}

// Distance from the robot's edge to the nearest static or pedestrian surface.
inline double robot_clearance(const WorldState& world, Vec2 p, double t_offset = 0.0) {
  double d = world.map->field.surface_distance(p);
  for (const auto& ped : world.pedestrians)
    d = std::min(d, distance(p, ped.position + t_offset * ped.velocity) - ped.radius);
  return d - world.robot.radius;
}

inline bool in_collision(const WorldState& world) { return robot_clearance(world, world.robot.pose.position()) < 0.0; }

inline Pose integrate_unicycle(const Pose& p, double v, double w, double dt) {
  const Vec2 q = arc_position(p, v, w, dt);
  return {q.x, q.y, wrap_angle(p.theta + w * dt)};
}

// Advances the robot by exact-arc integration and every pedestrian along its script.
inline WorldState step(const WorldState& world, double cmd_v, double cmd_w, double dt) {
  if (!(dt > 0.0)) throw RangeError("step: dt must be positive");
  WorldState next = world;
  next.time = world.time + dt;
  next.robot.pose = integrate_unicycle(world.robot.pose, cmd_v, cmd_w, dt);
  next.robot.v = cmd_v;
  next.robot.w = cmd_w;
  if (world.scripts) {
    for (std::size_t k = 0; k < world.scripts->size(); ++k)
      next.pedestrians[k] = pedestrian_at((*world.scripts)[k], next.time);
  }
  next.collided = world.collided || in_collision(next);
  return next;
}

// Occupied cell centers inside a square window centered on `center`.
inline std::vector<Vec2> local_obstacle_points(const StaticMap& map, Vec2 center, double half_size) {
  std::vector<Vec2> pts;
  const auto& g = map.grid;
  const Cell lo = g.cell_of({center.x - half_size, center.y - half_size});
  const Cell hi = g.cell_of({center.x + half_size, center.y + half_size});
  for (int j = std::max(lo.j, 0); j <= std::min(hi.j, g.height() - 1); ++j)
    for (int i = std::max(lo.i, 0); i <= std::min(hi.i, g.width() - 1); ++i)
      if (g.occupied(i, j)) {
        const Vec2 c = g.cell_center(i, j);
        if (std::abs(c.x - center.x) <= half_size && std::abs(c.y - center.y) <= half_size) pts.push_back(c);
      }
  return pts;
}

// Obstacles visible within the robot-centered local window.
inline std::vector<MovingDisc> local_obstacles(const WorldState& world) {
  const double half = 0.5 * world.local_window;
  const Vec2 c = world.robot.pose.position();
  std::vector<MovingDisc> obs;
  for (const Vec2& p : local_obstacle_points(*world.map, c, half))
    obs.push_back({p, {0.0, 0.0}, 0.5 * world.map->grid.resolution()});
  for (const auto& ped : world.pedestrians)
    if (std::abs(ped.position.x - c.x) <= half && std::abs(ped.position.y - c.y) <= half)
      obs.push_back({ped.position, ped.velocity, ped.radius});
  return obs;
}

inline double ttc(const WorldState& world) {
  const auto obs = local_obstacles(world);
  return time_to_collision(world.robot.pose, world.robot.v, world.robot.w, world.robot.radius, obs);
}

struct Scenario {
  std::string name;
  std::shared_ptr<const StaticMap> map;
  Pose start;
  Pose goal;
  std::vector<Vec2> path;
  std::vector<PedestrianScript> pedestrians;
  std::uint64_t seed = 0;
  double timeout = 120.0;
  double robot_radius = 0.3;
  double local_window = 4.0;
  double goal_tolerance = 0.3;
};

namespace detail {
inline Vec2 vec2_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() < 2) throw ConfigError("expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}
inline Pose pose_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() < 2) throw ConfigError("expected [x, y, theta]");
  return {j[0].get<double>(), j[1].get<double>(), j.size() > 2 ? j[2].get<double>() : 0.0};
}
}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  try {
    Scenario s;
    s.name = j.value("name", "unnamed");
    const double res = j.at("resolution").get<double>();
    const Vec2 origin = j.contains("origin") ? detail::vec2_from(j["origin"]) : Vec2{};
    std::vector<std::string> rows;
    if (j.contains("map")) {
      rows = j["map"].get<std::vector<std::string>>();
    } else if (j.contains("map_file")) {
      std::ifstream in(base_dir / j["map_file"].get<std::string>());
      if (!in) throw ConfigError("cannot open map file " + j["map_file"].get<std::string>());
      for (std::string line; std::getline(in, line);)
        if (!line.empty()) rows.push_back(line);
    } else {
      throw ConfigError("scenario needs 'map' or 'map_file'");
    }
    s.map = std::make_shared<const StaticMap>(OccupancyGrid::from_ascii(rows, res, origin));
    s.start = detail::pose_from(j.at("start"));
    s.goal = detail::pose_from(j.at("goal"));
    if (j.contains("path"))
      for (const auto& p : j["path"]) s.path.push_back(detail::vec2_from(p));
    if (s.path.empty() || !(s.path.front() == s.start.position())) s.path.insert(s.path.begin(), s.start.position());
    if (!(s.path.back() == s.goal.position())) s.path.push_back(s.goal.position());
    if (j.contains("pedestrians")) {
      for (const auto& pj : j["pedestrians"]) {
        PedestrianScript ps;
        for (const auto& w : pj.at("waypoints")) ps.waypoints.push_back(detail::vec2_from(w));
        if (pj.at("speed").is_array())
          ps.speeds = pj["speed"].get<std::vector<double>>();
        else
          ps.speeds = {pj["speed"].get<double>()};
        ps.start_time = pj.value("start_time", 0.0);
        ps.radius = pj.value("radius", 0.25);
        const std::string end = pj.value("end", "stop");
        ps.end = end == "loop" ? ScriptEnd::Loop : end == "pingpong" ? ScriptEnd::PingPong : ScriptEnd::Stop;
        ps.validate();
        s.pedestrians.push_back(std::move(ps));
      }
    }
    s.seed = j.value("seed", std::uint64_t{0});
    s.timeout = j.value("timeout", 120.0);
    s.robot_radius = j.value("robot_radius", 0.3);
    s.local_window = j.value("local_window", 4.0);
    s.goal_tolerance = j.value("goal_tolerance", 0.3);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario config: ") + e.what());
  }
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario " + path.string() + ": " + e.what());
  }
  return scenario_from_json(j, path.parent_path());
}

inline WorldState make_world(const Scenario& s, const Pose& start, double inflation_radius = 0.5,
                             std::vector<PedestrianScript> pedestrians = {}) {
  WorldState w;
  w.robot.pose = start;
  w.robot.radius = s.robot_radius;
  w.map = s.map;
  w.goal = s.goal;
  w.path = s.path;
  if (w.path.empty()) w.path = {start.position(), s.goal.position()};
  w.path.front() = start.position();
  w.local_window = s.local_window;
  auto scripts = pedestrians.empty() ? s.pedestrians : std::move(pedestrians);
  w.scripts = std::make_shared<const std::vector<PedestrianScript>>(std::move(scripts));
  for (const auto& ps : *w.scripts) w.pedestrians.push_back(pedestrian_at(ps, 0.0));
  set_inflation_radius(w, inflation_radius);
  w.collided = in_collision(w);
  return w;
}

inline WorldState make_world(const Scenario& s) { return make_world(s, s.start); }

}  // namespace lenav::sim
