#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lenav/core/error.hpp"
#include "lenav/nav/episode.hpp"
#include "lenav/sim/world.hpp"

namespace lenav::pipeline {

namespace detail {
// Red below 2 s, orange below 5 s, green otherwise.
inline const char* ttc_color(double ttc) {
  if (ttc < 2.0) return "#d62728";
  if (ttc < 5.0) return "#ff7f0e";
  return "#2ca02c";
}
}  // namespace detail

// Top-down plot: static map, reference path, pedestrians at rating instants, trajectory colored by TTC.
inline std::string trajectory_svg(const sim::Scenario& s, const nav::Episode& ep, double px_per_m = 50.0) {
  const auto& g = s.map->grid;
  const double W = g.width() * g.resolution(), H = g.height() * g.resolution();
  const Vec2 o = g.origin();
  auto X = [&](double x) { return (x - o.x) * px_per_m; };
  auto Y = [&](double y) { return (H - (y - o.y)) * px_per_m; };
  std::ostringstream os;
  os.precision(5);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W * px_per_m << "\" height=\"" << H * px_per_m
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double c = g.resolution() * px_per_m;
  for (int j = 0; j < g.height(); ++j) {
    int i = 0;
    while (i < g.width()) {
      if (!g.occupied(i, j)) {
        ++i;
        continue;
      }
      const int start = i;
      while (i < g.width() && g.occupied(i, j)) ++i;
      os << "<rect x=\"" << start * c << "\" y=\"" << (g.height() - 1 - j) * c << "\" width=\"" << (i - start) * c
         << "\" height=\"" << c << "\" fill=\"#444\"/>\n";
    }
  }
  os << "<polyline fill=\"none\" stroke=\"#999\" stroke-dasharray=\"6,4\" points=\"";
  for (const auto& p : s.path) os << X(p.x) << ',' << Y(p.y) << ' ';
  os << "\"/>\n";
  for (const auto& r : ep.ratings)
    for (const auto& p : r.snapshot.pedestrians)
      os << "<circle cx=\"" << X(p.position.x) << "\" cy=\"" << Y(p.position.y) << "\" r=\"" << p.radius * px_per_m
         << "\" fill=\"#1f77b4\" fill-opacity=\"0.15\"/>\n";
  const auto& t = ep.log.ticks;
  for (std::size_t k = 1; k < t.size(); ++k)
    os << "<line x1=\"" << X(t[k - 1].pose.x) << "\" y1=\"" << Y(t[k - 1].pose.y) << "\" x2=\"" << X(t[k].pose.x)
       << "\" y2=\"" << Y(t[k].pose.y) << "\" stroke=\"" << detail::ttc_color(t[k].ttc) << "\" stroke-width=\"3\"/>\n";
  os << "<circle cx=\"" << X(s.start.x) << "\" cy=\"" << Y(s.start.y) << "\" r=\"6\" fill=\"black\"/>\n";
  os << "<circle cx=\"" << X(s.goal.x) << "\" cy=\"" << Y(s.goal.y) << "\" r=\"" << s.goal_tolerance * px_per_m
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "</svg>\n";
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

}  // namespace lenav::pipeline
