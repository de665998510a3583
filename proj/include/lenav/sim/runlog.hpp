#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lenav/core/geometry.hpp"

namespace lenav::sim {

inline constexpr double kControlPeriod = 0.1;

struct TickRecord {
  double time = 0.0;
  Pose pose;
  double v = 0.0;
  double w = 0.0;
  double cmd_v = 0.0;
  double cmd_w = 0.0;
  double ttc = std::numeric_limits<double>::infinity();
  double min_obstacle_distance = 0.0;
  bool collision = false;
  double max_vel_x = 0.0;   // active planner speed limit
  double difficulty = 0.0;  // difficulty of the latest scene rating, NaN if none
};

struct RunLog {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<TickRecord> ticks;
};

inline constexpr const char* kRunLogColumns =
    "time,x,y,theta,v,omega,cmd_v,cmd_omega,ttc,min_obstacle_distance,collision,max_vel_x,difficulty";

namespace detail {
inline void put_real(std::ostream& os, double x) {
  if (std::isinf(x))
    os << (x > 0 ? "inf" : "-inf");
  else if (std::isnan(x))
    os << "nan";
  else
    os << x;
}
}  // namespace detail

// First line is a provenance comment, second the fixed header, then one row per 0.1 s tick.
inline void write_runlog_csv(std::ostream& os, const RunLog& log) {
  os << "# config_hash=" << std::hex << std::setw(16) << std::setfill('0') << log.config_hash << std::dec
     << std::setfill(' ') << " seed=" << log.seed << '\n';
  os << kRunLogColumns << '\n';
  os << std::setprecision(17);
  for (const auto& t : log.ticks) {
    for (double x : {t.time, t.pose.x, t.pose.y, t.pose.theta, t.v, t.w, t.cmd_v, t.cmd_w, t.ttc,
                     t.min_obstacle_distance}) {
      detail::put_real(os, x);
      os << ',';
    }
    os << (t.collision ? 1 : 0) << ',';
    detail::put_real(os, t.max_vel_x);
    os << ',';
    detail::put_real(os, t.difficulty);
    os << '\n';
  }
}

inline std::string runlog_csv(const RunLog& log) {
  std::ostringstream os;
  write_runlog_csv(os, log);
  return os.str();
}

}  // namespace lenav::sim
