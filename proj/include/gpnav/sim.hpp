#pragma once

// World state, differential-drive kinematics, collision checks and synchronous stepping.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gpnav/error.hpp"
#include "gpnav/geometry.hpp"

namespace gpnav {

enum class RobotStatus : std::uint8_t { Active, ReachedGoal, Collided, Stuck };

constexpr std::string_view to_string(RobotStatus s) {
  switch (s) {
    case RobotStatus::Active: return "active";
    case RobotStatus::ReachedGoal: return "reached_goal";
    case RobotStatus::Collided: return "collided";
    case RobotStatus::Stuck: return "stuck";
  }
  return "unknown";
}

struct RobotState {
  Vec2 position;
  double heading = 0.0;
  double linear_velocity = 0.0;
  double angular_velocity = 0.0;
  double radius = 0.25;
  Vec2 goal;
  RobotStatus status = RobotStatus::Active;

  bool active() const { return status == RobotStatus::Active; }
  /// World-frame velocity vector implied by the current commanded speed.
  Vec2 velocity() const { return unit_vector(heading) * linear_velocity; }
};

struct Action {
  double v = 0.0;
  double w = 0.0;
};

inline constexpr double kMaxLinearSpeed = 1.0;
inline constexpr double kMaxAngularSpeed = 1.0;

struct Bounds {
  Vec2 min{0.0, 0.0};
  Vec2 max{10.0, 10.0};
  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
};

struct WorldConfig {
  double dt = 0.1;
  std::vector<CircleObstacle> circles;
  std::vector<WallObstacle> walls;
  Bounds bounds;
  double max_episode_time = 120.0;
  std::uint64_t rng_seed = 0;
  double robot_radius = 0.25;
  double goal_tolerance = 0.2;
};

inline void validate(const WorldConfig& cfg) {
  if (!(cfg.dt > 0.0)) throw Error(ErrorCode::Config, "dt must be positive");
  if (!(cfg.max_episode_time > 0.0)) throw Error(ErrorCode::Config, "max_episode_time must be positive");
  if (!(cfg.robot_radius > 0.0)) throw Error(ErrorCode::Config, "robot_radius must be positive");
  if (!(cfg.goal_tolerance > 0.0)) throw Error(ErrorCode::Config, "goal_tolerance must be positive");
  if (!(cfg.bounds.width() > 0.0 && cfg.bounds.height() > 0.0))
    throw Error(ErrorCode::Config, "bounds must have positive extent");
}

/// Start pose and goal of one robot.
struct AgentSpawn {
  Vec2 start;
  double heading = 0.0;
  Vec2 goal;
};

class World {
 public:
  World() = default;
  World(WorldConfig config, std::span<const AgentSpawn> agents) : config_(std::move(config)) {
    validate(config_);
    robots_.reserve(agents.size());
    for (const auto& a : agents) {
      RobotState r;
      r.position = a.start;
      r.heading = wrap_angle(a.heading);
      r.radius = config_.robot_radius;
      r.goal = a.goal;
      robots_.push_back(r);
    }
  }

  const WorldConfig& config() const { return config_; }
  std::span<const RobotState> robots() const { return robots_; }
  std::span<RobotState> robots() { return robots_; }
  const RobotState& robot(std::size_t i) const { return robots_.at(i); }
  std::size_t size() const { return robots_.size(); }

  std::uint64_t steps() const { return steps_; }
  /// Always steps * dt, never accumulated.
  double sim_time() const { return static_cast<double>(steps_) * config_.dt; }

  bool done() const {
    for (const auto& r : robots_)
      if (r.active()) return false;
    return true;
  }

  void advance_clock() { ++steps_; }

 private:
  WorldConfig config_;
  std::vector<RobotState> robots_;
  std::uint64_t steps_ = 0;
};

inline Action clamp_action(Action raw) {
  if (!std::isfinite(raw.v) || !std::isfinite(raw.w))
    throw Error(ErrorCode::NonFiniteAction, "action components must be finite");
  return {std::clamp(raw.v, 0.0, kMaxLinearSpeed), std::clamp(raw.w, -kMaxAngularSpeed, kMaxAngularSpeed)};
}

/// Exact unicycle arc integration over one step.
inline RobotState integrate(const RobotState& state, Action action, double dt) {
  RobotState out = state;
  const double v = action.v;
  const double w = action.w;
  const double th = state.heading;
  if (std::abs(w) < 1e-9) {
    out.position += unit_vector(th) * (v * dt);
  } else {
    const double th1 = th + w * dt;
    out.position.x += (v / w) * (std::sin(th1) - std::sin(th));
    out.position.y -= (v / w) * (std::cos(th1) - std::cos(th));
  }
  out.heading = wrap_angle(th + w * dt);
  out.linear_velocity = v;
  out.angular_velocity = w;
  return out;
}

/// Signed surface distance from a disc at `p` of radius `radius` to the static obstacles.
inline double static_clearance(const WorldConfig& cfg, Vec2 p, double radius) {
  double best = kInf;
  for (const auto& c : cfg.circles) best = std::min(best, signed_distance(p, c) - radius);
  for (const auto& w : cfg.walls) best = std::min(best, signed_distance(p, w) - radius);
  return best;
}

/// Signed surface-to-surface distance from robot `agent_index` to its nearest robot or
/// static obstacle; negative iff penetrating, +inf when nothing else exists.
inline double min_separation(const World& world, std::size_t agent_index) {
  const auto robots = world.robots();
  const RobotState& me = robots[agent_index];
  double best = static_clearance(world.config(), me.position, me.radius);
  for (std::size_t j = 0; j < robots.size(); ++j) {
    if (j == agent_index) continue;
    best = std::min(best, distance(me.position, robots[j].position) - me.radius - robots[j].radius);
  }
  return best;
}

struct StepReport {
  std::vector<double> d_min;
  std::vector<RobotStatus> status;
  /// True for robots whose status left Active during this step.
  std::vector<bool> terminated_now;
  double sim_time = 0.0;
};

/// Advances every Active robot simultaneously. `actions` carries one entry per robot;
/// entries for robots that are no longer Active are ignored.
inline StepReport step(World& world, std::span<const Action> actions) {
  auto robots = world.robots();
  if (actions.size() != robots.size())
    throw Error(ErrorCode::ActionArity, "expected " + std::to_string(robots.size()) + " actions, got " +
                                            std::to_string(actions.size()));
  const double dt = world.config().dt;

  std::vector<RobotState> next(robots.begin(), robots.end());
  for (std::size_t i = 0; i < robots.size(); ++i) {
    if (!robots[i].active()) continue;
    next[i] = integrate(robots[i], clamp_action(actions[i]), dt);
  }
  std::copy(next.begin(), next.end(), robots.begin());
  world.advance_clock();

  StepReport report;
  report.sim_time = world.sim_time();
  report.d_min.resize(robots.size());
  report.status.resize(robots.size());
  report.terminated_now.assign(robots.size(), false);
  const auto& cfg = world.config();
  const bool timed_out = report.sim_time >= cfg.max_episode_time - 1e-9;

  // Statuses are decided from the post-step configuration of all robots before any are
  // written back, so evaluation order never matters.
  std::vector<RobotStatus> new_status(robots.size());
  for (std::size_t i = 0; i < robots.size(); ++i) {
    report.d_min[i] = min_separation(world, i);
    new_status[i] = robots[i].status;
    if (!robots[i].active()) continue;
    if (report.d_min[i] < 0.0) {
      new_status[i] = RobotStatus::Collided;
    } else if (distance(robots[i].position, robots[i].goal) < cfg.goal_tolerance) {
      new_status[i] = RobotStatus::ReachedGoal;
    } else if (timed_out) {
      new_status[i] = RobotStatus::Stuck;
    }
  }
  for (std::size_t i = 0; i < robots.size(); ++i) {
    if (robots[i].active() && new_status[i] != RobotStatus::Active) {
      report.terminated_now[i] = true;
      robots[i].status = new_status[i];
      robots[i].linear_velocity = 0.0;
      robots[i].angular_velocity = 0.0;
    }
    report.status[i] = robots[i].status;
  }
  return report;
}

}  // namespace gpnav
