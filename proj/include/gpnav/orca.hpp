#pragma once

// Reciprocal velocity obstacles with the incremental 2-D linear program of van den Berg et al.,
// plus a heading tracker that turns a holonomic velocity into a unicycle command.

#include <algorithm>
#include <cmath>
#include <vector>

#include "gpnav/geometry.hpp"
#include "gpnav/sim.hpp"

namespace gpnav {

/// Half-plane boundary; velocities on the left of `direction` (det(direction, v - point) >= 0) are allowed.
struct OrcaLine {
  Vec2 point;
  Vec2 direction;
};

struct OrcaConfig {
  double time_horizon_agents = 5.0;
  double time_horizon_obstacles = 1.3;
  double neighbor_range = 3.5;
  std::size_t max_neighbors = 10;
  double max_speed = kMaxLinearSpeed;
  /// Added to every radius to absorb the unicycle's tracking error.
  double epsilon_tracking = 0.1;
  double turn_gain = 1.5;
};

namespace lp {

inline constexpr double kEps = 1e-9;

/// Optimizes on line `line_no` subject to lines [0, line_no) and the speed disc.
inline bool program1(const std::vector<OrcaLine>& lines, std::size_t line_no, double radius, Vec2 opt,
                     bool direction_opt, Vec2& result) {
  const OrcaLine& L = lines[line_no];
  const double dotp = dot(L.point, L.direction);
  const double disc = dotp * dotp + radius * radius - norm_sq(L.point);
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  double t_left = -dotp - sq;
  double t_right = -dotp + sq;
  for (std::size_t i = 0; i < line_no; ++i) {
    const double denom = det(L.direction, lines[i].direction);
    const double numer = det(lines[i].direction, L.point - lines[i].point);
    if (std::abs(denom) <= kEps) {
      if (numer < 0.0) return false;
      continue;
    }
    const double t = numer / denom;
    if (denom >= 0.0)
      t_right = std::min(t_right, t);
    else
      t_left = std::max(t_left, t);
    if (t_left > t_right) return false;
  }
  if (direction_opt) {
    result = L.point + L.direction * (dot(opt, L.direction) > 0.0 ? t_right : t_left);
  } else {
    const double t = std::clamp(dot(L.direction, opt - L.point), t_left, t_right);
    result = L.point + L.direction * t;
  }
  return true;
}

/// Returns lines.size() on success, otherwise the index of the first line that failed.
inline std::size_t program2(const std::vector<OrcaLine>& lines, double radius, Vec2 opt, bool direction_opt,
                            Vec2& result) {
  if (direction_opt)
    result = opt * radius;
  else if (norm_sq(opt) > radius * radius)
    result = normalized(opt) * radius;
  else
    result = opt;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (det(lines[i].direction, lines[i].point - result) > 0.0) {
      const Vec2 prev = result;
      if (!program1(lines, i, radius, opt, direction_opt, result)) {
        result = prev;
        return i;
      }
    }
  }
  return lines.size();
}

/// Infeasible case: minimizes the largest violation of the agent lines while keeping the
/// first `num_hard` lines satisfied.
inline void program3(const std::vector<OrcaLine>& lines, std::size_t num_hard, std::size_t begin, double radius,
                     Vec2& result) {
  double dist = 0.0;
  for (std::size_t i = begin; i < lines.size(); ++i) {
    if (det(lines[i].direction, lines[i].point - result) <= dist) continue;
    std::vector<OrcaLine> proj(lines.begin(), lines.begin() + static_cast<std::ptrdiff_t>(num_hard));
    for (std::size_t j = num_hard; j < i; ++j) {
      OrcaLine line;
      const double d = det(lines[i].direction, lines[j].direction);
      if (std::abs(d) <= kEps) {
        if (dot(lines[i].direction, lines[j].direction) > 0.0) continue;
        line.point = (lines[i].point + lines[j].point) * 0.5;
      } else {
        line.point = lines[i].point + lines[i].direction * (det(lines[j].direction, lines[i].point - lines[j].point) / d);
      }
      line.direction = normalized(lines[j].direction - lines[i].direction);
      proj.push_back(line);
    }
    const Vec2 prev = result;
    if (program2(proj, radius, Vec2{-lines[i].direction.y, lines[i].direction.x}, true, result) < proj.size())
      result = prev;
    dist = det(lines[i].direction, lines[i].point - result);
  }
}

}  // namespace lp

/// Velocity closest to `preferred` inside the speed disc and all half-planes. The first
/// `num_hard` lines are never relaxed when the problem is infeasible.
inline Vec2 solve_velocity(const std::vector<OrcaLine>& lines, std::size_t num_hard, double max_speed, Vec2 preferred) {
  Vec2 result;
  const std::size_t fail = lp::program2(lines, max_speed, preferred, false, result);
  if (fail < lines.size()) lp::program3(lines, num_hard, fail, max_speed, result);
  return result;
}

/// Disc seen by ORCA: a neighbor robot or a circular obstacle.
struct OrcaDisc {
  Vec2 position;
  Vec2 velocity;
  double radius = 0.0;
  /// Share of the avoidance effort taken by the ego agent (0.5 reciprocal, 1 for static).
  double responsibility = 0.5;
};

/// Velocity-obstacle half-plane for one disc neighbor.
inline OrcaLine disc_line(Vec2 pos, Vec2 vel, double radius, const OrcaDisc& other, double horizon, double dt) {
  const Vec2 rel_pos = other.position - pos;
  const Vec2 rel_vel = vel - other.velocity;
  const double dist_sq = norm_sq(rel_pos);
  const double r = radius + other.radius;
  const double r_sq = r * r;
  OrcaLine line;
  Vec2 u;
  if (dist_sq > r_sq) {
    const double inv_tau = 1.0 / horizon;
    const Vec2 w = rel_vel - rel_pos * inv_tau;
    const double w_len_sq = norm_sq(w);
    const double dot1 = dot(w, rel_pos);
    if (dot1 < 0.0 && dot1 * dot1 > r_sq * w_len_sq) {
      const double w_len = std::sqrt(w_len_sq);
      const Vec2 unit_w = w / w_len;
      line.direction = {unit_w.y, -unit_w.x};
      u = unit_w * (r * inv_tau - w_len);
    } else {
      const double leg = std::sqrt(dist_sq - r_sq);
      if (det(rel_pos, w) > 0.0) {
        line.direction = Vec2{rel_pos.x * leg - rel_pos.y * r, rel_pos.x * r + rel_pos.y * leg} / dist_sq;
      } else {
        line.direction = -(Vec2{rel_pos.x * leg + rel_pos.y * r, -rel_pos.x * r + rel_pos.y * leg} / dist_sq);
      }
      u = line.direction * dot(rel_vel, line.direction) - rel_vel;
    }
  } else {
    // Already overlapping: resolve within one step.
    const double inv_dt = 1.0 / dt;
    const Vec2 w = rel_vel - rel_pos * inv_dt;
    const double w_len = norm(w);
    const Vec2 unit_w = w_len > 0.0 ? w / w_len : Vec2{1.0, 0.0};
    line.direction = {unit_w.y, -unit_w.x};
    u = unit_w * (r * inv_dt - w_len);
  }
  line.point = vel + u * other.responsibility;
  return line;
}

/// Supporting half-plane of a wall at its closest point: the approach speed toward the wall
/// is limited to (clearance) / horizon.
inline OrcaLine wall_line(Vec2 pos, double radius, const WallObstacle& wall, double horizon, double dt) {
  const Box2 box = wall_box(wall);
  const Vec2 q = closest_point(pos, box);
  Vec2 toward = q - pos;
  const double d = norm(toward);
  if (d > 1e-12) {
    toward = toward / d;
  } else {
    // Center inside the wall: push out through the nearer face.
    const Vec2 rel = pos - box.center;
    const Vec2 normal{-box.axis.y, box.axis.x};
    const double lx = dot(rel, box.axis);
    const double ly = dot(rel, normal);
    if (box.half_length - std::abs(lx) < box.half_width - std::abs(ly))
      toward = box.axis * (lx > 0.0 ? -1.0 : 1.0);
    else
      toward = normal * (ly > 0.0 ? -1.0 : 1.0);
  }
  const double clearance = signed_distance(pos, box) - radius;
  const double limit = clearance > 0.0 ? clearance / horizon : clearance / dt;
  OrcaLine line;
  line.point = toward * limit;
  line.direction = {-toward.y, toward.x};
  return line;
}

struct OrcaNeighbors {
  std::vector<OrcaDisc> agents;
  std::vector<CircleObstacle> circles;
  std::vector<WallObstacle> walls;
};

/// Collision-avoiding holonomic velocity for one agent. Static constraints are hard.
inline Vec2 orca_velocity(Vec2 pos, Vec2 vel, double radius, Vec2 preferred, const OrcaNeighbors& nb,
                          const OrcaConfig& cfg, double dt) {
  std::vector<OrcaLine> lines;
  lines.reserve(nb.agents.size() + nb.circles.size() + nb.walls.size());
  const double r_eff = radius + cfg.epsilon_tracking;
  for (const auto& c : nb.circles)
    lines.push_back(disc_line(pos, vel, r_eff, OrcaDisc{c.center, {}, c.radius, 1.0}, cfg.time_horizon_obstacles, dt));
  for (const auto& w : nb.walls) lines.push_back(wall_line(pos, r_eff, w, cfg.time_horizon_obstacles, dt));
  const std::size_t num_hard = lines.size();
  for (const auto& a : nb.agents) {
    OrcaDisc o = a;
    o.radius += cfg.epsilon_tracking;
    lines.push_back(disc_line(pos, vel, r_eff, o, cfg.time_horizon_agents, dt));
  }
  return solve_velocity(lines, num_hard, cfg.max_speed, preferred);
}

/// Unicycle command that tracks a desired world-frame velocity: turn toward it, drive only
/// with the component along the heading.
inline Action nh_track(Vec2 desired, double heading, double turn_gain = 1.5) {
  const double speed = norm(desired);
  if (speed < 1e-9) return {0.0, 0.0};
  const double err = wrap_angle(std::atan2(desired.y, desired.x) - heading);
  return clamp_action({speed * std::max(0.0, std::cos(err)), turn_gain * err});
}

}  // namespace gpnav
