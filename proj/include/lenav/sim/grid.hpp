#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lenav/core/error.hpp"
#include "lenav/core/geometry.hpp"

namespace lenav::sim {

struct Cell {
  int i = 0;  // column, +x
  int j = 0;  // row, +y
};

// Boolean occupancy on a regular grid. Cell (i, j) covers
// [origin.x + i*res, origin.x + (i+1)*res) x [origin.y + j*res, origin.y + (j+1)*res).
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(double resolution, int width, int height, Vec2 origin = {})
      : resolution_(resolution), width_(width), height_(height), origin_(origin),
        occupied_(static_cast<std::size_t>(std::max(width, 0)) * static_cast<std::size_t>(std::max(height, 0)), 0) {
    if (!(resolution > 0.0)) throw ConfigError("grid resolution must be positive");
    if (width <= 0 || height <= 0) throw ConfigError("grid dimensions must be positive");
  }

  // Rows are listed top (max y) first; '#' and 'o' mark occupied cells.
  static OccupancyGrid from_ascii(const std::vector<std::string>& rows, double resolution, Vec2 origin = {}) {
    if (rows.empty()) throw ConfigError("empty ASCII map");
    const int h = static_cast<int>(rows.size());
    const int w = static_cast<int>(rows.front().size());
    OccupancyGrid g(resolution, w, h, origin);
    for (int r = 0; r < h; ++r) {
      const std::string& line = rows[static_cast<std::size_t>(r)];
      if (static_cast<int>(line.size()) != w) throw ConfigError("ASCII map rows must have equal length");
      for (int c = 0; c < w; ++c) {
        const char ch = line[static_cast<std::size_t>(c)];
        if (ch == '#' || ch == 'o') g.set(c, h - 1 - r, true);
      }
    }
    return g;
  }

  double resolution() const { return resolution_; }
  int width() const { return width_; }
  int height() const { return height_; }
  Vec2 origin() const { return origin_; }
  std::size_t size() const { return occupied_.size(); }

  bool in_bounds(int i, int j) const { return i >= 0 && j >= 0 && i < width_ && j < height_; }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(i);
  }
  bool occupied(int i, int j) const { return occupied_[index(i, j)] != 0; }
  void set(int i, int j, bool occ) { occupied_[index(i, j)] = occ ? 1 : 0; }

  Vec2 cell_center(int i, int j) const {
    return {origin_.x + (i + 0.5) * resolution_, origin_.y + (j + 0.5) * resolution_};
  }

  Cell cell_of(Vec2 p) const {
    return {static_cast<int>(std::floor((p.x - origin_.x) / resolution_)),
            static_cast<int>(std::floor((p.y - origin_.y) / resolution_))};
  }

  const std::vector<std::uint8_t>& data() const { return occupied_; }

 private:
  double resolution_ = 1.0;
  int width_ = 0;
  int height_ = 0;
  Vec2 origin_{};
  std::vector<std::uint8_t> occupied_;
};

// Exact squared Euclidean distance (in cells) from every cell center to the
// nearest occupied cell center.
class DistanceField {
 public:
  static constexpr std::int64_t kNone = std::numeric_limits<std::int64_t>::max();

  explicit DistanceField(const OccupancyGrid& grid)
      : resolution_(grid.resolution()), width_(grid.width()), height_(grid.height()), origin_(grid.origin()) {
    const int w = width_, h = height_;
    // Column pass: distance to nearest occupied cell in the same column.
    std::vector<std::int64_t> col(grid.size(), kNone);
    for (int i = 0; i < w; ++i) {
      std::int64_t last = -1;
      for (int j = 0; j < h; ++j) {
        if (grid.occupied(i, j)) last = j;
        if (last >= 0) col[grid.index(i, j)] = j - last;
      }
      last = -1;
      for (int j = h - 1; j >= 0; --j) {
        if (grid.occupied(i, j)) last = j;
        if (last >= 0) {
          auto& c = col[grid.index(i, j)];
          c = std::min<std::int64_t>(c, last - j);
        }
      }
    }
    // Row pass: min over columns of dx^2 + g^2, exact in integers.
    sq_.assign(grid.size(), kNone);
    for (int j = 0; j < h; ++j) {
      for (int i = 0; i < w; ++i) {
        std::int64_t best = kNone;
        for (int k = 0; k < w; ++k) {
          const std::int64_t g = col[grid.index(k, j)];
          if (g == kNone) continue;
          const std::int64_t dx = i - k;
          best = std::min(best, dx * dx + g * g);
        }
        sq_[grid.index(i, j)] = best;
      }
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }

  std::int64_t squared_cells(int i, int j) const {
    return sq_[static_cast<std::size_t>(j) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(i)];
  }

  // Center-to-center distance in metres; +inf for an empty grid.
  double center_distance(int i, int j) const {
    const std::int64_t s = squared_cells(i, j);
    if (s == kNone) return std::numeric_limits<double>::infinity();
    return resolution_ * std::sqrt(static_cast<double>(s));
  }

  // Distance from a point to the nearest obstacle surface, treating occupied
  // cells as discs of radius res/2 and the outside of the map as occupied.
  double surface_distance(Vec2 p) const {
    const int i = static_cast<int>(std::floor((p.x - origin_.x) / resolution_));
    const int j = static_cast<int>(std::floor((p.y - origin_.y) / resolution_));
    if (i < 0 || j < 0 || i >= width_ || j >= height_) return -0.5 * resolution_;
    return center_distance(i, j) - 0.5 * resolution_;
  }

 private:
  double resolution_;
  int width_;
  int height_;
  Vec2 origin_;
  std::vector<std::int64_t> sq_;
};

struct Costmap {
  OccupancyGrid base;
  double inflation_radius = 0.0;
  std::vector<double> cost;

  double at(int i, int j) const { return cost[base.index(i, j)]; }
};

// Linear decay: 1 on occupied cells, max(0, 1 - d/radius) elsewhere.
inline Costmap inflate(const OccupancyGrid& grid, const DistanceField& field, double radius) {
  if (radius < 0.0) throw RangeError("inflation radius must be non-negative");
  Costmap cm{grid, radius, std::vector<double>(grid.size(), 0.0)};
  for (int j = 0; j < grid.height(); ++j) {
    for (int i = 0; i < grid.width(); ++i) {
      double c = 0.0;
      if (grid.occupied(i, j)) {
        c = 1.0;
      } else if (radius > 0.0) {
        const double d = field.center_distance(i, j);
        c = std::max(0.0, 1.0 - d / radius);
      }
      cm.cost[grid.index(i, j)] = c;
    }
  }
  return cm;
}

inline Costmap inflate(const OccupancyGrid& grid, double radius) { return inflate(grid, DistanceField(grid), radius); }

}  // namespace lenav::sim
