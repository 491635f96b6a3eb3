#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gpnav/bench.hpp"

using namespace gpnav;

namespace {

Scenario open_world(std::vector<AgentSpawn> agents, double size = 16.0) {
  Scenario s;
  s.name = "open";
  s.config.bounds = {{0, 0}, {size, size}};
  s.agents = std::move(agents);
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  return out;
}

}  // namespace

TEST(Bench, ParkedRobotIsStuckAtTheTimeLimit) {
  EnvOptions opts;
  opts.perception = false;
  NavEnv env(open_world({{{2, 2}, 0.0, {8, 2}}}), opts, 1);
  const std::vector<Action> zero(1);
  std::size_t steps = 0;
  while (!env.done()) {
    env.step(zero);
    ++steps;
  }
  EXPECT_EQ(steps, 1200u);
  EXPECT_NEAR(env.world().sim_time(), 120.0, 1e-9);
  EXPECT_EQ(env.world().robot(0).status, RobotStatus::Stuck);
}

TEST(Bench, StraightHeadOnPairCollides) {
  RunConfig cfg;
  cfg.fixed = open_world({{{3, 6}, 0.0, {13, 6}}, {{13, 6}, kPi, {3, 6}}});
  cfg.controller = ControllerKind::Straight;
  const auto m = aggregate({run_episode(cfg, 0)});
  EXPECT_EQ(m.robots, 2u);
  EXPECT_EQ(m.collisions, 2u);
  EXPECT_EQ(m.collision_rate, 1.0);
  EXPECT_TRUE(std::isnan(m.extra_time));
}

TEST(Bench, StraightSingleRobotIsNearTheLowerBound) {
  RunConfig cfg;
  cfg.fixed = open_world({{{3, 6}, 0.0, {13, 6}}});
  cfg.controller = ControllerKind::Straight;
  const auto ep = run_episode(cfg, 0);
  const auto& a = ep.agents[0];
  EXPECT_EQ(a.status, RobotStatus::ReachedGoal);
  EXPECT_NEAR(a.path_length, 10.0, 1e-9);
  EXPECT_NEAR(a.lower_bound, 9.8, 1e-9);
  const auto m = aggregate({ep});
  EXPECT_EQ(m.success_rate, 1.0);
  EXPECT_LT(m.extra_time_ratio, 0.02);
  EXPECT_GE(m.extra_time, -1e-9);
  EXPECT_GT(m.average_speed, 0.95);
  EXPECT_LE(m.average_speed, 1.0 + 1e-9);
}

TEST(Bench, LowerBoundNeverExceedsTravelTime) {
  RunConfig cfg;
  cfg.spec.kind = ScenarioKind::Random;
  cfg.spec.num_agents = 6;
  cfg.controller = ControllerKind::Orca;
  cfg.trials = 4;
  cfg.seed = 11;
  cfg.threads = 1;
  for (const auto& e : run_trials(cfg))
    for (const auto& a : e.agents) {
      EXPECT_NE(a.status, RobotStatus::Active);
      EXPECT_GT(a.lower_bound, 0.0);
      if (a.status == RobotStatus::ReachedGoal) {
        EXPECT_GE(a.travel_time + 1e-9, a.lower_bound);
      }
    }
}

TEST(Aggregate, HandExample) {
  EpisodeResult e;
  e.agents.resize(4);
  e.agents[0] = {RobotStatus::ReachedGoal, 10.0, 9.0, 9.2, 9.0};
  e.agents[1] = {RobotStatus::ReachedGoal, 12.0, 11.0, 10.2, 10.0};
  e.agents[2] = {RobotStatus::Collided, 4.0, 2.0, 8.2, 8.0};
  e.agents[3] = {RobotStatus::Stuck, 120.0, 0.0, 5.2, 5.0};
  const auto m = aggregate({e});
  EXPECT_EQ(m.successes, 2u);
  EXPECT_EQ(m.collisions, 1u);
  EXPECT_EQ(m.stuck, 1u);
  EXPECT_DOUBLE_EQ(m.success_rate + m.collision_rate + m.stuck_rate, 1.0);
  EXPECT_DOUBLE_EQ(m.extra_time, 1.5);
  EXPECT_DOUBLE_EQ(m.extra_time_ratio, 3.0 / 19.0);
  EXPECT_DOUBLE_EQ(m.average_speed, (0.9 + 11.0 / 12.0 + 0.5 + 0.0) / 4.0);
}

TEST(Aggregate, RejectsUnfinishedRobots) {
  EpisodeResult e;
  e.agents.resize(1);
  EXPECT_THROW(aggregate({e}), Error);
}

TEST(Report, EmptyCsvIsHeaderOnly) {
  const auto csv = report_csv({});
  EXPECT_EQ(csv, csv_header());
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
}

TEST(Report, RowParsesBack) {
  ReportRow r;
  r.scenario = "circle";
  r.agents = 10;
  r.controller = "orca";
  r.noise = true;
  r.trials = 50;
  r.seed = 7;
  r.metrics.robots = 500;
  r.metrics.success_rate = 0.98;
  r.metrics.collision_rate = 0.02;
  r.metrics.extra_time = 1.25;
  r.metrics.extra_time_ratio = 0.125;
  r.metrics.average_speed = 0.875;
  const auto header = split(csv_header().substr(0, csv_header().size() - 1));
  auto line = csv_row(r);
  ASSERT_EQ(line.back(), '\n');
  line.pop_back();
  const auto f = split(line);
  ASSERT_EQ(f.size(), header.size());
  auto col = [&](const std::string& name) {
    return f[std::find(header.begin(), header.end(), name) - header.begin()];
  };
  EXPECT_EQ(col("scenario"), "circle");
  EXPECT_EQ(col("noise"), "on");
  EXPECT_EQ(std::stoul(col("robots")), 500u);
  EXPECT_DOUBLE_EQ(std::stod(col("success_rate")), 0.98);
  EXPECT_DOUBLE_EQ(std::stod(col("extra_time_s")), 1.25);
  EXPECT_DOUBLE_EQ(std::stod(col("average_speed")), 0.875);
  EXPECT_EQ(col("stuck_rate"), "0.000000");
}

TEST(Report, TrialCsvIsIndependentOfThreadCount) {
  RunConfig cfg;
  cfg.spec = eval_suite(ScenarioKind::Doorway, 5);
  cfg.controller = ControllerKind::Orca;
  cfg.env.noise.enabled = true;
  cfg.trials = 3;
  cfg.seed = 42;
  cfg.threads = 1;
  const auto a = episodes_csv(run_trials(cfg));
  cfg.threads = 3;
  const auto b = episodes_csv(run_trials(cfg));
  EXPECT_EQ(a, b);
  cfg.seed = 43;
  EXPECT_NE(a, episodes_csv(run_trials(cfg)));
}

TEST(Bench, ParseController) {
  EXPECT_EQ(parse_controller("orca"), ControllerKind::Orca);
  EXPECT_EQ(parse_controller("straight"), ControllerKind::Straight);
  EXPECT_THROW(parse_controller("dwa"), Error);
}
