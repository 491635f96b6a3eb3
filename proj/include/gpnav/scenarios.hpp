#pragma once

// Seeded scenario generators: circle crossing, doorway, hallway swap, plus-shaped junction,
// random circular obstacles and a room with random interior walls.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gpnav/error.hpp"
#include "gpnav/geometry.hpp"
#include "gpnav/planner.hpp"
#include "gpnav/sim.hpp"

namespace gpnav {

enum class ScenarioKind : std::uint8_t { Circle, Doorway, Hallway, Plus, Random, Room };

constexpr std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::Circle: return "circle";
    case ScenarioKind::Doorway: return "doorway";
    case ScenarioKind::Hallway: return "hallway";
    case ScenarioKind::Plus: return "plus";
    case ScenarioKind::Random: return "random";
    case ScenarioKind::Room: return "room";
  }
  return "unknown";
}

inline ScenarioKind parse_scenario_kind(std::string_view s) {
  for (auto k : {ScenarioKind::Circle, ScenarioKind::Doorway, ScenarioKind::Hallway, ScenarioKind::Plus,
                 ScenarioKind::Random, ScenarioKind::Room})
    if (s == to_string(k)) return k;
  throw Error(ErrorCode::Config, "unknown scenario '" + std::string(s) + "'");
}

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::Circle;
  /// Characteristic size in meters (circle diameter, room/hallway length, plus extent).
  double scale = 10.0;
  std::size_t num_agents = 10;
  std::size_t num_obstacles = 8;
  std::size_t num_walls = 10;
  std::uint64_t rng_seed = 0;
  double robot_radius = 0.25;
  double dt = 0.1;
  double max_episode_time = 120.0;
  double goal_tolerance = 0.2;
};

struct Scenario {
  std::string name;
  WorldConfig config;
  std::vector<AgentSpawn> agents;
};

namespace scen {

inline constexpr double kWallThickness = 0.1;
inline constexpr int kPlacementAttempts = 2000;
inline constexpr int kLayoutAttempts = 50;

inline WorldConfig base_config(const ScenarioSpec& s) {
  WorldConfig c;
  c.dt = s.dt;
  c.max_episode_time = s.max_episode_time;
  c.rng_seed = s.rng_seed;
  c.robot_radius = s.robot_radius;
  c.goal_tolerance = s.goal_tolerance;
  return c;
}

/// Wall whose inner face lies on the segment a-b, extending to the right of a->b by the thickness.
/// Walking a free region counter-clockwise therefore puts the material outside it.
inline WallObstacle wall_outside(Vec2 a, Vec2 b, double thickness = kWallThickness) {
  const Vec2 d = normalized(b - a);
  const Vec2 right{d.y, -d.x};
  const Vec2 off = right * (0.5 * thickness);
  return {a + off, b + off, thickness};
}

inline double heading_to(Vec2 from, Vec2 to) { return std::atan2(to.y - from.y, to.x - from.x); }

inline bool separated(Vec2 p, const std::vector<Vec2>& others, double min_sep) {
  for (const auto& o : others)
    if (distance(p, o) < min_sep) return false;
  return true;
}

/// Samples start/goal pairs inside `lo`..`hi` that are clear of static obstacles, mutually
/// separated and connected on the planning grid.
template <class Rng>
std::vector<AgentSpawn> sample_agents(const WorldConfig& cfg, const OccupancyGrid& grid, std::size_t n, Vec2 lo,
                                      Vec2 hi, Vec2 goal_lo, Vec2 goal_hi, double min_travel, Rng& rng) {
  const double r = cfg.robot_radius;
  const double sep = 2.0 * r + 0.2;
  std::uniform_real_distribution<double> ux(lo.x, hi.x), uy(lo.y, hi.y), gx(goal_lo.x, goal_hi.x),
      gy(goal_lo.y, goal_hi.y);
  std::vector<AgentSpawn> out;
  std::vector<Vec2> starts, goals;
  auto clear = [&](Vec2 p) { return static_clearance(cfg, p, r) >= 0.15 && !grid.occupied_at(p); };
  for (std::size_t i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const Vec2 s{ux(rng), uy(rng)};
      const Vec2 g{gx(rng), gy(rng)};
      if (distance(s, g) < min_travel) continue;
      if (!clear(s) || !clear(g) || !separated(s, starts, sep) || !separated(g, goals, sep)) continue;
      try {
        astar(grid, s, g);
      } catch (const Error&) {
        continue;
      }
      starts.push_back(s);
      goals.push_back(g);
      out.push_back({s, heading_to(s, g), g});
      placed = true;
    }
    if (!placed) return {};
  }
  return out;
}

[[noreturn]] inline void overconstrained(const ScenarioSpec& s) {
  throw Error(ErrorCode::Overconstrained, "cannot place " + std::to_string(s.num_agents) + " agents in " +
                                              std::string(to_string(s.kind)) + " at scale " +
                                              std::to_string(s.scale));
}

inline Scenario circle(const ScenarioSpec& s) {
  Scenario sc{"circle", base_config(s), {}};
  const double radius = 0.5 * s.scale;
  const double margin = 1.0;
  const Vec2 c{radius + margin, radius + margin};
  sc.config.bounds = {{0.0, 0.0}, {2.0 * (radius + margin), 2.0 * (radius + margin)}};
  const std::size_t n = s.num_agents;
  if (n > 1 && 2.0 * radius * std::sin(kPi / static_cast<double>(n)) < 2.0 * s.robot_radius + 0.1) overconstrained(s);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n);
    const Vec2 start = c + unit_vector(a) * radius;
    const Vec2 goal = c * 2.0 - start;
    sc.agents.push_back({start, heading_to(start, goal), goal});
  }
  return sc;
}

/// A room (scale x 0.4 scale) whose top wall has a gap of four robot radii; goals lie beyond it.
template <class Rng>
Scenario doorway(const ScenarioSpec& s, Rng& rng) {
  Scenario sc{"doorway", base_config(s), {}};
  const double L = s.scale;
  const double H = 0.4 * s.scale;
  const double gap = 4.0 * s.robot_radius;
  const double t = kWallThickness;
  sc.config.bounds = {{-0.5, -0.5}, {L + 0.5, 2.0 * H + 0.5}};
  auto& w = sc.config.walls;
  w.push_back(wall_outside({0.0, 0.0}, {L, 0.0}));
  w.push_back(wall_outside({L, 0.0}, {L, H}));
  w.push_back(wall_outside({0.0, H}, {0.0, 0.0}));
  w.push_back({{-t, H + 0.5 * t}, {0.5 * L - 0.5 * gap, H + 0.5 * t}, t});
  w.push_back({{0.5 * L + 0.5 * gap, H + 0.5 * t}, {L + t, H + 0.5 * t}, t});
  const auto grid = rasterize(sc.config);
  const double m = s.robot_radius + 0.3;
  sc.agents = sample_agents(sc.config, grid, s.num_agents, {m, m}, {L - m, H - m}, {m, H + 1.0}, {L - m, 2.0 * H - m},
                            0.0, rng);
  if (sc.agents.size() != s.num_agents) overconstrained(s);
  return sc;
}

/// Corridor (scale x 0.25 scale); two groups start at opposite ends and swap.
inline Scenario hallway(const ScenarioSpec& s) {
  Scenario sc{"hallway", base_config(s), {}};
  const double L = s.scale;
  const double W = 0.25 * s.scale;
  sc.config.bounds = {{-0.5, -0.5}, {L + 0.5, W + 0.5}};
  auto& w = sc.config.walls;
  w.push_back(wall_outside({0.0, 0.0}, {L, 0.0}));
  w.push_back(wall_outside({L, W}, {0.0, W}));
  w.push_back(wall_outside({0.0, W}, {0.0, 0.0}));
  w.push_back(wall_outside({L, 0.0}, {L, W}));
  const double r = s.robot_radius;
  const double spacing = 2.0 * r + 0.3;
  const double edge = r + 0.3;
  const std::size_t rows = static_cast<std::size_t>(std::floor((W - 2.0 * edge) / spacing)) + 1;
  const std::size_t n_left = (s.num_agents + 1) / 2;
  const std::size_t n_right = s.num_agents - n_left;
  const std::size_t cols = (std::max(n_left, n_right) + rows - 1) / rows;
  if (edge + static_cast<double>(cols) * spacing > 0.4 * L) overconstrained(s);
  auto slot = [&](std::size_t j, std::size_t group_size, bool reversed) {
    const std::size_t group_cols = (group_size + rows - 1) / rows;
    const std::size_t col = j / rows;
    const std::size_t row = j % rows;
    const std::size_t in_col = std::min(rows, group_size - col * rows);
    const std::size_t x_col = reversed ? group_cols - 1 - col : col;
    const double y = 0.5 * W + (static_cast<double>(row) - 0.5 * static_cast<double>(in_col - 1)) * spacing;
    return Vec2{edge + static_cast<double>(x_col) * spacing, y};
  };
  // The front column of each group travels furthest, so nobody has to squeeze past a robot
  // that already parked on its goal.
  for (std::size_t j = 0; j < n_left; ++j) {
    const Vec2 start = slot(j, n_left, false);
    const Vec2 g = slot(j, n_left, true);
    sc.agents.push_back({start, 0.0, Vec2{L - g.x, g.y}});
  }
  for (std::size_t j = 0; j < n_right; ++j) {
    const Vec2 s0 = slot(j, n_right, false);
    const Vec2 start{L - s0.x, s0.y};
    sc.agents.push_back({start, kPi, slot(j, n_right, true)});
  }
  return sc;
}

/// Two perpendicular corridors crossing at the center; each agent starts in one arm and
/// heads for the opposite arm. Arms are filled round-robin.
inline Scenario plus(const ScenarioSpec& s) {
  Scenario sc{"plus", base_config(s), {}};
  const double L = s.scale;
  const double hw = 0.1 * s.scale;  // half corridor width
  const double c = 0.5 * L;
  sc.config.bounds = {{-0.5, -0.5}, {L + 0.5, L + 0.5}};
  auto& w = sc.config.walls;
  const double a = c - hw, b = c + hw;
  // Outline walked so that the wall material always lies on the right, outside the free region.
  const std::vector<Vec2> outline{{0, a}, {a, a}, {a, 0}, {b, 0}, {b, a}, {L, a}, {L, b}, {b, b},
                                  {b, L}, {a, L}, {a, b}, {0, b}};
  for (std::size_t i = 0; i < outline.size(); ++i) {
    const Vec2 p = outline[i];
    const Vec2 q = outline[(i + 1) % outline.size()];
    w.push_back(wall_outside(p, q));
  }
  const double r = s.robot_radius;
  const double spacing = 2.0 * r + 0.3;
  const std::size_t per_arm = (s.num_agents + 3) / 4;
  const double first = c - (r + 0.4);
  if (first - static_cast<double>(per_arm - 1) * spacing < hw + r + 0.3) overconstrained(s);
  for (std::size_t i = 0; i < s.num_agents; ++i) {
    const std::size_t arm = i % 4;
    const std::size_t j = i / 4;
    const std::size_t in_arm = (s.num_agents - arm + 3) / 4;
    const double d = first - static_cast<double>(j) * spacing;
    const double d_goal = first - static_cast<double>(in_arm - 1 - j) * spacing;
    const Vec2 dir = unit_vector(kPi * 0.5 * static_cast<double>(arm) + kPi);  // west, south, east, north
    const Vec2 start = Vec2{c, c} + dir * d;
    const Vec2 goal = Vec2{c, c} - dir * d_goal;
    sc.agents.push_back({start, heading_to(start, goal), goal});
  }
  return sc;
}

template <class Rng>
Scenario random_obstacles(const ScenarioSpec& s, Rng& rng) {
  const double L = s.scale;
  for (int layout = 0; layout < kLayoutAttempts; ++layout) {
    Scenario sc{"random", base_config(s), {}};
    sc.config.bounds = {{0.0, 0.0}, {L, L}};
    std::uniform_real_distribution<double> uc(1.0, L - 1.0), ur(0.3, 0.7);
    for (std::size_t k = 0; k < s.num_obstacles; ++k) sc.config.circles.push_back({{uc(rng), uc(rng)}, ur(rng)});
    const auto grid = rasterize(sc.config);
    const double m = s.robot_radius + 0.25;
    sc.agents = sample_agents(sc.config, grid, s.num_agents, {m, m}, {L - m, L - m}, {m, m}, {L - m, L - m},
                              0.4 * L, rng);
    if (sc.agents.size() == s.num_agents) return sc;
  }
  overconstrained(s);
}

/// Square room with perimeter walls and random axis-aligned interior walls.
template <class Rng>
Scenario room(const ScenarioSpec& s, Rng& rng) {
  const double L = s.scale;
  const double unit = s.scale / 10.0;
  for (int layout = 0; layout < kLayoutAttempts; ++layout) {
    Scenario sc{"room", base_config(s), {}};
    sc.config.bounds = {{-0.5, -0.5}, {L + 0.5, L + 0.5}};
    auto& w = sc.config.walls;
    w.push_back(wall_outside({0.0, 0.0}, {L, 0.0}));
    w.push_back(wall_outside({L, 0.0}, {L, L}));
    w.push_back(wall_outside({L, L}, {0.0, L}));
    w.push_back(wall_outside({0.0, L}, {0.0, 0.0}));
    std::uniform_real_distribution<double> uc(1.0, L - 1.0), ul(1.0 * unit, 4.0 * unit);
    std::bernoulli_distribution horizontal(0.5);
    for (std::size_t k = 0; k < s.num_walls; ++k) {
      const Vec2 c{uc(rng), uc(rng)};
      const double half = 0.5 * ul(rng);
      const Vec2 d = horizontal(rng) ? Vec2{half, 0.0} : Vec2{0.0, half};
      w.push_back({c - d, c + d, kWallThickness});
    }
    const auto grid = rasterize(sc.config);
    const double m = s.robot_radius + 0.25;
    sc.agents = sample_agents(sc.config, grid, s.num_agents, {m, m}, {L - m, L - m}, {m, m}, {L - m, L - m},
                              0.3 * L, rng);
    if (sc.agents.size() == s.num_agents) return sc;
  }
  overconstrained(s);
}

}  // namespace scen

/// Deterministic in spec.rng_seed.
inline Scenario generate(const ScenarioSpec& spec) {
  if (spec.num_agents == 0) throw Error(ErrorCode::Config, "scenario needs at least one agent");
  if (!(spec.scale > 0.0)) throw Error(ErrorCode::Config, "scenario scale must be positive");
  std::mt19937_64 rng(spec.rng_seed);
  Scenario sc;
  switch (spec.kind) {
    case ScenarioKind::Circle: sc = scen::circle(spec); break;
    case ScenarioKind::Doorway: sc = scen::doorway(spec, rng); break;
    case ScenarioKind::Hallway: sc = scen::hallway(spec); break;
    case ScenarioKind::Plus: sc = scen::plus(spec); break;
    case ScenarioKind::Random: sc = scen::random_obstacles(spec, rng); break;
    case ScenarioKind::Room: sc = scen::room(spec, rng); break;
  }
  validate(sc.config);
  return sc;
}

/// Agent counts of the evaluation grid per scenario.
inline std::vector<std::size_t> table_agent_counts(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::Circle: return {10, 20, 40};
    case ScenarioKind::Doorway: return {5, 10, 15};
    case ScenarioKind::Hallway: return {8, 12, 16};
    case ScenarioKind::Random: return {10, 20, 40};
    default: return {};
  }
}

inline bool is_table_agent_count(ScenarioKind kind, std::size_t n) {
  const auto v = table_agent_counts(kind);
  return std::find(v.begin(), v.end(), n) != v.end();
}

/// Evaluation settings: 15 m scale, eight obstacles for the random map.
inline ScenarioSpec eval_suite(ScenarioKind kind, std::size_t num_agents) {
  if (kind == ScenarioKind::Plus || kind == ScenarioKind::Room)
    throw Error(ErrorCode::Config, std::string(to_string(kind)) + " is a training scenario");
  ScenarioSpec s;
  s.kind = kind;
  s.scale = 15.0;
  s.num_agents = num_agents;
  s.num_obstacles = 8;
  return s;
}

}  // namespace gpnav
