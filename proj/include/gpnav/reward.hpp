#pragma once

#include "gpnav/geometry.hpp"
#include "gpnav/sim.hpp"

namespace gpnav {

struct RewardConfig {
  double r_goal = 15.0;
  double r_collision = -25.0;
  double r_social = -0.25;
  double personal_space = 0.3;
  double r_progress = 2.5;
};

/// Linear penalty inside the personal-space band, zero outside it.
inline double social_penalty(double d_min, const RewardConfig& cfg = {}) {
  if (d_min >= cfg.personal_space || d_min < 0.0) return 0.0;
  return cfg.r_social * (cfg.personal_space - d_min) / cfg.personal_space;
}

/// Both distances are measured to the same (time-t) target.
inline double progress_reward(Vec2 prev_pos, Vec2 curr_pos, Vec2 target, const RewardConfig& cfg = {}) {
  return cfg.r_progress * (distance(prev_pos, target) - distance(curr_pos, target));
}

enum class RewardBranch : std::uint8_t { Goal, Collision, Shaping };

struct RewardTerms {
  RewardBranch branch = RewardBranch::Shaping;
  double social = 0.0;
  double progress = 0.0;
  double total = 0.0;
};

/// Goal takes priority over collision (reaching the goal requires d_min >= 0 in the
/// simulator), collision over shaping.
inline RewardTerms step_reward_terms(RobotStatus status, double d_min, Vec2 prev_pos, Vec2 curr_pos, Vec2 target,
                                     const RewardConfig& cfg = {}) {
  RewardTerms t;
  if (status == RobotStatus::ReachedGoal && d_min >= 0.0) {
    t.branch = RewardBranch::Goal;
    t.total = cfg.r_goal;
  } else if (d_min < 0.0) {
    t.branch = RewardBranch::Collision;
    t.total = cfg.r_collision;
  } else {
    t.branch = RewardBranch::Shaping;
    t.social = social_penalty(d_min, cfg);
    t.progress = progress_reward(prev_pos, curr_pos, target, cfg);
    t.total = t.social + t.progress;
  }
  return t;
}

inline double step_reward(RobotStatus status, double d_min, Vec2 prev_pos, Vec2 curr_pos, Vec2 target,
                          const RewardConfig& cfg = {}) {
  return step_reward_terms(status, d_min, prev_pos, curr_pos, target, cfg).total;
}

}  // namespace gpnav
