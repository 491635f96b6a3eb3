#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gpnav/reward.hpp"

using namespace gpnav;

TEST(SocialPenalty, Examples) {
  EXPECT_NEAR(social_penalty(0.15), -0.125, 1e-15);
  EXPECT_EQ(social_penalty(0.3), 0.0);
  EXPECT_NEAR(social_penalty(0.0), -0.25, 1e-15);
  EXPECT_EQ(social_penalty(1.0), 0.0);
}

TEST(SocialPenalty, ContinuousAtBandEdgeAndMaximalAtContact) {
  EXPECT_NEAR(social_penalty(0.3 - 1e-9), 0.0, 1e-8);
  for (double d = 0.0; d < 0.3; d += 0.01) EXPECT_GE(social_penalty(d), social_penalty(0.0));
}

TEST(ProgressReward, Examples) {
  const Vec2 target{0, 0};
  EXPECT_NEAR(progress_reward({2.0, 0}, {1.5, 0}, target), 1.25, 1e-12);
  EXPECT_EQ(progress_reward({1.0, 1.0}, {1.0, 1.0}, target), 0.0);
  EXPECT_NEAR(progress_reward({1.0, 0}, {1.1, 0}, target), -0.25, 1e-12);
}

TEST(StepReward, Examples) {
  EXPECT_EQ(step_reward(RobotStatus::ReachedGoal, 1.0, {0, 0}, {0.1, 0}, {1, 0}), 15.0);
  EXPECT_EQ(step_reward(RobotStatus::Collided, -0.01, {0, 0}, {0.1, 0}, {1, 0}), -25.0);
  EXPECT_NEAR(step_reward(RobotStatus::Active, 0.5, {0, 0}, {0.1, 0}, {1, 0}), 0.25, 1e-12);
}

TEST(StepReward, ShapingCombinesSocialAndProgress) {
  const auto t = step_reward_terms(RobotStatus::Active, 0.15, {0, 0}, {0.1, 0}, {1, 0});
  EXPECT_EQ(t.branch, RewardBranch::Shaping);
  EXPECT_NEAR(t.social, -0.125, 1e-15);
  EXPECT_NEAR(t.progress, 0.25, 1e-12);
  EXPECT_NEAR(t.total, 0.125, 1e-12);
}

TEST(StepReward, GoalWhileOverlappingIsACollision) {
  const auto t = step_reward_terms(RobotStatus::ReachedGoal, -0.01, {0, 0}, {0.1, 0}, {1, 0});
  EXPECT_EQ(t.branch, RewardBranch::Collision);
  EXPECT_EQ(t.total, -25.0);
}

TEST(StepReward, ExactlyOneBranchFires) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ud(-0.5, 1.0), up(-2, 2);
  std::uniform_int_distribution<int> us(0, 3);
  for (int k = 0; k < 10000; ++k) {
    const auto st = static_cast<RobotStatus>(us(rng));
    const double d = ud(rng);
    const auto t = step_reward_terms(st, d, {up(rng), up(rng)}, {up(rng), up(rng)}, {up(rng), up(rng)});
    const bool goal = st == RobotStatus::ReachedGoal && d >= 0.0;
    const bool coll = !goal && d < 0.0;
    const int fired = int(t.branch == RewardBranch::Goal) + int(t.branch == RewardBranch::Collision) +
                      int(t.branch == RewardBranch::Shaping);
    EXPECT_EQ(fired, 1);
    if (goal) EXPECT_EQ(t.total, 15.0);
    else if (coll) EXPECT_EQ(t.total, -25.0);
    else EXPECT_EQ(t.branch, RewardBranch::Shaping);
  }
}

TEST(ProgressReward, TelescopesForFixedTarget) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  const Vec2 target{3, -1};
  Vec2 p{0, 0};
  const Vec2 start = p;
  double sum = 0.0;
  for (int k = 0; k < 500; ++k) {
    const Vec2 next{p.x + u(rng), p.y + u(rng)};
    sum += progress_reward(p, next, target);
    p = next;
  }
  EXPECT_NEAR(sum, 2.5 * (distance(start, target) - distance(p, target)), 1e-10);
}
