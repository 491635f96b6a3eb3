#pragma once

// Occupancy grid over the static map, 8-connected A*, and the running target point.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <queue>
#include <string>
#include <vector>

#include "gpnav/error.hpp"
#include "gpnav/geometry.hpp"
#include "gpnav/sim.hpp"

namespace gpnav {

struct Cell {
  int ix = 0;
  int iy = 0;
  friend bool operator==(Cell, Cell) = default;
};

class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(double resolution, Vec2 origin, int width, int height, double inflation_radius)
      : resolution_(resolution),
        origin_(origin),
        width_(width),
        height_(height),
        inflation_radius_(inflation_radius),
        cells_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0) {}

  double resolution() const { return resolution_; }
  Vec2 origin() const { return origin_; }
  int width() const { return width_; }
  int height() const { return height_; }
  double inflation_radius() const { return inflation_radius_; }

  bool in_bounds(Cell c) const { return c.ix >= 0 && c.iy >= 0 && c.ix < width_ && c.iy < height_; }
  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.iy) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(c.ix);
  }
  Cell cell_of(std::size_t idx) const {
    return {static_cast<int>(idx % static_cast<std::size_t>(width_)),
            static_cast<int>(idx / static_cast<std::size_t>(width_))};
  }

  /// Out-of-bounds cells read as occupied.
  bool occupied(Cell c) const { return !in_bounds(c) || cells_[index(c)] != 0; }
  void set_occupied(Cell c, bool v) { cells_.at(index(c)) = v ? 1 : 0; }

  Cell world_to_cell(Vec2 p) const {
    return {static_cast<int>(std::floor((p.x - origin_.x) / resolution_)),
            static_cast<int>(std::floor((p.y - origin_.y) / resolution_))};
  }
  Vec2 cell_center(Cell c) const {
    return {origin_.x + (c.ix + 0.5) * resolution_, origin_.y + (c.iy + 0.5) * resolution_};
  }
  bool occupied_at(Vec2 p) const { return occupied(world_to_cell(p)); }

  const std::vector<std::uint8_t>& cells() const { return cells_; }

 private:
  double resolution_ = 0.1;
  Vec2 origin_;
  int width_ = 0;
  int height_ = 0;
  double inflation_radius_ = 0.0;
  std::vector<std::uint8_t> cells_;
};

/// Marks every cell whose center lies within `inflation` of a static obstacle.
/// Robots are never rasterized.
inline OccupancyGrid rasterize(const WorldConfig& config, double resolution, double inflation) {
  if (!(resolution > 0.0)) throw Error(ErrorCode::Config, "grid resolution must be positive");
  const auto& b = config.bounds;
  const int w = static_cast<int>(std::ceil(b.width() / resolution - 1e-9));
  const int h = static_cast<int>(std::ceil(b.height() / resolution - 1e-9));
  OccupancyGrid grid(resolution, b.min, w, h, inflation);
  for (int iy = 0; iy < h; ++iy) {
    for (int ix = 0; ix < w; ++ix) {
      const Vec2 p = grid.cell_center({ix, iy});
      if (static_clearance(config, p, 0.0) <= inflation) grid.set_occupied({ix, iy}, true);
    }
  }
  return grid;
}

/// Planning grid: obstacles inflated by the robot radius.
inline OccupancyGrid rasterize(const WorldConfig& config, double resolution = 0.1) {
  return rasterize(config, resolution, config.robot_radius);
}

struct GlobalPath {
  std::vector<Vec2> waypoints;
  /// Polyline length from the first waypoint up to each waypoint.
  std::vector<double> cumulative_length;
  /// Grid cost of the cell sequence (straight steps * res + diagonal steps * sqrt2 * res).
  double grid_cost = 0.0;

  bool empty() const { return waypoints.empty(); }
  std::size_t size() const { return waypoints.size(); }
  double length() const { return cumulative_length.empty() ? 0.0 : cumulative_length.back(); }
};

namespace detail {

inline constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
inline constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};

/// Diagonal moves may not cut the corner of an occupied cell.
inline bool move_allowed(const OccupancyGrid& g, Cell from, int k) {
  const Cell to{from.ix + kDx[k], from.iy + kDy[k]};
  if (g.occupied(to)) return false;
  if (k >= 4) {
    if (g.occupied({from.ix + kDx[k], from.iy}) || g.occupied({from.ix, from.iy + kDy[k]})) return false;
  }
  return true;
}

inline std::vector<double> cumulative(const std::vector<Vec2>& pts) {
  std::vector<double> out(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) out[i] = out[i - 1] + distance(pts[i - 1], pts[i]);
  return out;
}

}  // namespace detail

/// Cost of a cell sequence, computed from its step counts so equal-cost paths compare equal
/// bit-for-bit regardless of summation order.
inline double cell_path_cost(const std::vector<Cell>& cells, double resolution) {
  long straight = 0;
  long diagonal = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const int dx = std::abs(cells[i].ix - cells[i - 1].ix);
    const int dy = std::abs(cells[i].iy - cells[i - 1].iy);
    (dx + dy == 2 ? diagonal : straight) += 1;
  }
  return static_cast<double>(straight) * resolution + static_cast<double>(diagonal) * std::sqrt(2.0) * resolution;
}

/// 8-connected A* on cells; returns the cell sequence start..goal.
inline std::vector<Cell> astar_cells(const OccupancyGrid& grid, Cell start, Cell goal) {
  if (grid.occupied(start)) throw Error(ErrorCode::InvalidEndpoint, "start cell is occupied");
  if (grid.occupied(goal)) throw Error(ErrorCode::InvalidEndpoint, "goal cell is occupied");
  const std::size_t n = static_cast<std::size_t>(grid.width()) * static_cast<std::size_t>(grid.height());
  const double sqrt2 = std::sqrt(2.0);
  std::vector<double> g(n, kInf);
  std::vector<std::int64_t> parent(n, -1);
  std::vector<std::uint8_t> closed(n, 0);
  auto heuristic = [&](Cell c) { return std::hypot(c.ix - goal.ix, c.iy - goal.iy); };

  struct Node {
    double f;
    double h;
    std::size_t idx;
    bool operator>(const Node& o) const {
      if (f != o.f) return f > o.f;
      if (h != o.h) return h > o.h;
      return idx > o.idx;
    }
  };
  std::priority_queue<Node, std::vector<Node>, std::greater<>> open;
  const std::size_t s = grid.index(start);
  const std::size_t t = grid.index(goal);
  g[s] = 0.0;
  open.push({heuristic(start), heuristic(start), s});
  while (!open.empty()) {
    const Node cur = open.top();
    open.pop();
    if (closed[cur.idx]) continue;
    closed[cur.idx] = 1;
    if (cur.idx == t) break;
    const Cell c = grid.cell_of(cur.idx);
    for (int k = 0; k < 8; ++k) {
      if (!detail::move_allowed(grid, c, k)) continue;
      const Cell nb{c.ix + detail::kDx[k], c.iy + detail::kDy[k]};
      const std::size_t ni = grid.index(nb);
      if (closed[ni]) continue;
      const double cand = g[cur.idx] + (k >= 4 ? sqrt2 : 1.0);
      if (cand < g[ni]) {
        g[ni] = cand;
        parent[ni] = static_cast<std::int64_t>(cur.idx);
        const double h = heuristic(nb);
        open.push({cand + h, h, ni});
      }
    }
  }
  if (!closed[t]) throw Error(ErrorCode::Unreachable, "no path between start and goal");
  std::vector<Cell> cells;
  for (std::int64_t i = static_cast<std::int64_t>(t); i != -1; i = parent[static_cast<std::size_t>(i)])
    cells.push_back(grid.cell_of(static_cast<std::size_t>(i)));
  std::reverse(cells.begin(), cells.end());
  return cells;
}

/// A* between metric points. Waypoints are the centers of the path cells followed by the
/// exact goal position.
inline GlobalPath astar(const OccupancyGrid& grid, Vec2 start, Vec2 goal) {
  const Cell sc = grid.world_to_cell(start);
  const Cell gc = grid.world_to_cell(goal);
  if (!grid.in_bounds(sc) || grid.occupied(sc)) throw Error(ErrorCode::InvalidEndpoint, "start is not in a free cell");
  if (!grid.in_bounds(gc) || grid.occupied(gc)) throw Error(ErrorCode::InvalidEndpoint, "goal is not in a free cell");
  const auto cells = astar_cells(grid, sc, gc);
  GlobalPath path;
  path.waypoints.reserve(cells.size() + 1);
  for (const auto& c : cells) path.waypoints.push_back(grid.cell_center(c));
  path.waypoints.push_back(goal);
  path.cumulative_length = detail::cumulative(path.waypoints);
  path.grid_cost = cell_path_cost(cells, grid.resolution());
  return path;
}

/// Builds a path directly from a waypoint list (e.g. for tests or straight-line goals).
inline GlobalPath make_path(std::vector<Vec2> waypoints) {
  GlobalPath p;
  p.waypoints = std::move(waypoints);
  p.cumulative_length = detail::cumulative(p.waypoints);
  p.grid_cost = p.length();
  return p;
}

/// True when every sample along a-b (spaced a quarter cell apart) lies in a free cell.
inline bool line_of_sight(const OccupancyGrid& grid, Vec2 a, Vec2 b) {
  const double len = distance(a, b);
  const int n = std::max(1, static_cast<int>(std::ceil(len / (0.25 * grid.resolution()))));
  for (int k = 0; k <= n; ++k)
    if (grid.occupied_at(a + (b - a) * (static_cast<double>(k) / n))) return false;
  return true;
}

/// Length from `start` along the path after greedy line-of-sight shortening. Strips the
/// 8-connected zigzag, so it stays close to the true shortest route through free space.
inline double taut_length(const OccupancyGrid& grid, Vec2 start, const GlobalPath& path) {
  std::vector<Vec2> pts{start};
  pts.insert(pts.end(), path.waypoints.begin(), path.waypoints.end());
  double len = 0.0;
  std::size_t i = 0;
  while (i + 1 < pts.size()) {
    std::size_t j = i + 1;
    while (j + 1 < pts.size() && line_of_sight(grid, pts[i], pts[j + 1])) ++j;
    len += distance(pts[i], pts[j]);
    i = j;
  }
  return len;
}

struct TargetPoint {
  Vec2 position;
  /// Heading of the path at the target index.
  double path_direction = 0.0;
  std::size_t index = 0;
};

/// Angle of the segment leaving waypoint i (the last segment for the final index).
inline double path_direction_at(const GlobalPath& path, std::size_t i) {
  const auto& w = path.waypoints;
  if (w.size() < 2) return 0.0;
  const std::size_t a = std::min(i, w.size() - 2);
  const Vec2 d = w[a + 1] - w[a];
  return std::atan2(d.y, d.x);
}

inline std::size_t nearest_waypoint(const GlobalPath& path, Vec2 p) {
  std::size_t best = 0;
  double best_d = kInf;
  for (std::size_t i = 0; i < path.waypoints.size(); ++i) {
    const double d = norm_sq(path.waypoints[i] - p);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

/// Waypoint `horizon` indices past the nearest one, clamped to the final waypoint.
inline TargetPoint running_target(const GlobalPath& path, Vec2 agent_pos, int horizon) {
  if (path.empty()) throw Error(ErrorCode::EmptyPath, "running target requested on an empty path");
  if (horizon < 0) throw Error(ErrorCode::Config, "horizon must be non-negative");
  const std::size_t last = path.size() - 1;
  const std::size_t idx = std::min(nearest_waypoint(path, agent_pos) + static_cast<std::size_t>(horizon), last);
  return {path.waypoints[idx], path_direction_at(path, idx), idx};
}

/// Binary PGM (P5): occupied cells black, free white; row 0 is the top (max y).
inline void write_pgm(const OccupancyGrid& grid, const std::string& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + file);
  out << "P5\n" << grid.width() << " " << grid.height() << "\n255\n";
  for (int iy = grid.height() - 1; iy >= 0; --iy)
    for (int ix = 0; ix < grid.width(); ++ix) out.put(grid.occupied({ix, iy}) ? char(0) : char(255));
}

}  // namespace gpnav
