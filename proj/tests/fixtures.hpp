#pragma once

// Small worlds and parameter vectors shared by the unit tests.

#include <memory>
#include <string>
#include <vector>

#include "lenav/core/hyperparams.hpp"
#include "lenav/core/random.hpp"
#include "lenav/sim/world.hpp"

namespace lenav::fixture {

// Every hyperparameter at fraction `u` of its default bounds.
inline HyperparamVector at_fraction(PlannerFamily f, double u) {
  NormalizedHyperparams n{f, {}};
  n.u.fill(u);
  return denormalize(n, NormalizationSpec::defaults(f));
}

// Walled room of w x h cells with optional extra occupied cells.
inline sim::Scenario room(int w, int h, double res, const std::vector<sim::Cell>& blocks = {}) {
  std::vector<std::string> rows(static_cast<std::size_t>(h), std::string(static_cast<std::size_t>(w), '.'));
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i)
      if (i == 0 || j == 0 || i == w - 1 || j == h - 1) rows[static_cast<std::size_t>(h - 1 - j)][static_cast<std::size_t>(i)] = '#';
  for (const auto& c : blocks) rows[static_cast<std::size_t>(h - 1 - c.j)][static_cast<std::size_t>(c.i)] = '#';
  sim::Scenario s;
  s.name = "room";
  s.map = std::make_shared<const sim::StaticMap>(sim::OccupancyGrid::from_ascii(rows, res));
  return s;
}

// Room with a few random obstacle cells kept away from `keep_clear`.
inline sim::Scenario random_room(Rng& rng, Vec2 keep_clear, double clear_radius, int blocks = 8) {
  const int w = 60, h = 60;
  const double res = 0.1;
  std::vector<sim::Cell> cells;
  while (static_cast<int>(cells.size()) < blocks) {
    const sim::Cell c{1 + static_cast<int>(rng.below(w - 2)), 1 + static_cast<int>(rng.below(h - 2))};
    const Vec2 p{(c.i + 0.5) * res, (c.j + 0.5) * res};
    if (distance(p, keep_clear) > clear_radius) cells.push_back(c);
  }
  return room(w, h, res, cells);
}

}  // namespace lenav::fixture
