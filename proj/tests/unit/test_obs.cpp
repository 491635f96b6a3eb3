#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gpnav/env.hpp"
#include "gpnav/obs.hpp"

using namespace gpnav;

namespace {

WorldConfig open_world() {
  WorldConfig c;
  c.bounds = {{-10, -10}, {10, 10}};
  return c;
}

ObservationBundle observe(const World& w, const std::vector<ClusterTrack>& tracks, const TargetPoint& tp,
                          AblationConfig ab = {}) {
  ScanHistory h(raycast(w, 0));
  return build_observation(w, 0, h, tracks, tp, ab);
}

ClusterTrack dyn_track(Vec2 p, Vec2 v, int id = 0) {
  ClusterTrack t;
  t.id = id;
  t.closest_point = p;
  t.velocity = v;
  t.age = 3;
  return t;
}

}  // namespace

TEST(BuildObservation, GoalAheadAndToTheLeft) {
  World w(open_world(), std::vector<AgentSpawn>{{{1, 1}, 0.0, {3, 1}}});
  auto b = observe(w, {}, {});
  EXPECT_NEAR(b.o_g.distance, 2.0, 1e-12);
  EXPECT_NEAR(b.o_g.bearing, 0.0, 1e-12);
  World w2(open_world(), std::vector<AgentSpawn>{{{1, 1}, 0.0, {1, 2}}});
  b = observe(w2, {}, {});
  EXPECT_NEAR(b.o_g.distance, 1.0, 1e-12);
  EXPECT_NEAR(b.o_g.bearing, kPi / 2, 1e-12);
}

TEST(BuildObservation, PathFeaturesAreBodyFrame) {
  World w(open_world(), std::vector<AgentSpawn>{{{0, 0}, kPi / 2, {0, 5}}});
  TargetPoint tp{{1, 1}, 0.0, 3};
  const auto b = observe(w, {}, tp);
  EXPECT_NEAR(b.o_gp.distance, std::sqrt(2.0), 1e-12);
  // target is ahead-right of a robot facing +y
  EXPECT_NEAR(b.o_gp.angle_difference, -kPi / 4, 1e-12);
  EXPECT_NEAR(b.o_gp.path_direction, -kPi / 2, 1e-12);
}

TEST(BuildObservation, NodesFromDynamicTracksNearestFirst) {
  World w(open_world(), std::vector<AgentSpawn>{{{0, 0}, kPi / 2, {0, 5}}});
  ClusterTrack st = dyn_track({0.5, 0}, {0, 0}, 5);
  st.classification = TrackClass::Static;
  ClusterTrack coasting = dyn_track({0.2, 0}, {0, 0}, 6);
  coasting.misses = 1;
  const auto b = observe(w, {dyn_track({0, 3}, {1, 0}, 1), dyn_track({0, 1}, {0, 1}, 2), st, coasting}, {});
  ASSERT_EQ(b.o_C.node_count(), 2u);
  EXPECT_NEAR(b.o_C.nodes[0].distance, 1.0, 1e-12);
  EXPECT_NEAR(b.o_C.nodes[0].bearing, 0.0, 1e-12);
  // world +y velocity is body forward
  EXPECT_NEAR(b.o_C.nodes[0].vx, 1.0, 1e-12);
  EXPECT_NEAR(b.o_C.nodes[0].vy, 0.0, 1e-12);
  // world +x velocity is body right
  EXPECT_NEAR(b.o_C.nodes[1].vx, 0.0, 1e-12);
  EXPECT_NEAR(b.o_C.nodes[1].vy, -1.0, 1e-12);
}

TEST(BuildObservation, NeighborCap) {
  World w(open_world(), std::vector<AgentSpawn>{{{0, 0}, 0.0, {0, 5}}});
  std::vector<ClusterTrack> tracks;
  for (int k = 0; k < 30; ++k) tracks.push_back(dyn_track({0.1 * (30 - k) + 0.5, 0}, {}, k));
  const auto b = observe(w, tracks, {});
  ASSERT_EQ(b.o_C.node_count(), 16u);
  EXPECT_NEAR(b.o_C.nodes[0].distance, 0.6, 1e-12);
}

TEST(BuildObservation, AblationsEmptyTheirComponents) {
  World w(open_world(), std::vector<AgentSpawn>{{{0, 0}, 0.0, {0, 5}}});
  const std::vector<ClusterTrack> tracks{dyn_track({1, 0}, {0.3, 0})};
  const TargetPoint tp{{2, 1}, 0.4, 5};
  auto b = observe(w, tracks, tp, parse_ablation("no-gnn"));
  EXPECT_EQ(b.o_C.node_count(), 0u);
  EXPECT_GT(b.o_gp.distance, 0.0);
  b = observe(w, tracks, tp, parse_ablation("no-gp"));
  EXPECT_EQ(b.o_gp.distance, 0.0);
  EXPECT_EQ(b.o_gp.angle_difference, 0.0);
  EXPECT_EQ(b.o_gp.path_direction, 0.0);
  EXPECT_EQ(b.o_C.node_count(), 1u);
  EXPECT_THROW(parse_ablation("gnn"), Error);
}

TEST(BuildObservation, FrameEquivariance) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3), ua(-kPi, kPi);
  for (int s = 0; s < 50; ++s) {
    auto cfg = open_world();
    cfg.circles.push_back({{u(rng) + 4, u(rng)}, 0.5});
    cfg.walls.push_back({{-5, u(rng)}, {-5, u(rng) + 4}, 0.2});
    const AgentSpawn me{{u(rng) * 0.3, u(rng) * 0.3}, ua(rng), {u(rng), u(rng)}};
    const AgentSpawn other{{me.start.x + 1.5, me.start.y - 1.0}, ua(rng), {0, 0}};
    const std::vector<ClusterTrack> tracks{dyn_track({u(rng), u(rng)}, {u(rng) * 0.2, u(rng) * 0.2})};
    const TargetPoint tp{{u(rng), u(rng)}, ua(rng), 2};

    const double a = ua(rng);
    const Vec2 shift{u(rng), u(rng)};
    auto xf = [&](Vec2 p) { return rotate(p, a) + shift; };
    auto cfg2 = cfg;
    for (auto& c : cfg2.circles) c.center = xf(c.center);
    for (auto& wl : cfg2.walls) {
      wl.a = xf(wl.a);
      wl.b = xf(wl.b);
    }
    cfg2.bounds = {{-30, -30}, {30, 30}};
    std::vector<AgentSpawn> sp2{{xf(me.start), me.heading + a, xf(me.goal)}, {xf(other.start), other.heading + a, {0, 0}}};
    std::vector<ClusterTrack> tracks2 = tracks;
    tracks2[0].closest_point = xf(tracks[0].closest_point);
    tracks2[0].velocity = rotate(tracks[0].velocity, a);
    const TargetPoint tp2{xf(tp.position), tp.path_direction + a, 2};

    const auto b1 = observe(World(cfg, std::vector<AgentSpawn>{me, other}), tracks, tp);
    const auto b2 = observe(World(cfg2, sp2), tracks2, tp2);
    for (std::size_t k = 0; k < kLidarBeams; ++k) EXPECT_NEAR(b1.o_z[2][k], b2.o_z[2][k], 1e-9);
    EXPECT_NEAR(b1.o_g.distance, b2.o_g.distance, 1e-9);
    EXPECT_NEAR(wrap_angle(b1.o_g.bearing - b2.o_g.bearing), 0.0, 1e-9);
    EXPECT_NEAR(b1.o_gp.distance, b2.o_gp.distance, 1e-9);
    EXPECT_NEAR(wrap_angle(b1.o_gp.angle_difference - b2.o_gp.angle_difference), 0.0, 1e-9);
    EXPECT_NEAR(wrap_angle(b1.o_gp.path_direction - b2.o_gp.path_direction), 0.0, 1e-9);
    ASSERT_EQ(b1.o_C.node_count(), 1u);
    ASSERT_EQ(b2.o_C.node_count(), 1u);
    EXPECT_NEAR(b1.o_C.nodes[0].distance, b2.o_C.nodes[0].distance, 1e-9);
    EXPECT_NEAR(wrap_angle(b1.o_C.nodes[0].bearing - b2.o_C.nodes[0].bearing), 0.0, 1e-9);
    EXPECT_NEAR(b1.o_C.nodes[0].vx, b2.o_C.nodes[0].vx, 1e-9);
    EXPECT_NEAR(b1.o_C.nodes[0].vy, b2.o_C.nodes[0].vy, 1e-9);
  }
}

TEST(BuildObservation, ComponentsInRange) {
  World w(open_world(), std::vector<AgentSpawn>{{{0, 0}, 3.0, {-4, 2}}, {{1, 1}, 0, {5, 5}}});
  const auto b = observe(w, {dyn_track({1, 0.75}, {0.1, 0})}, {{-1, 1}, -kPi, 4});
  EXPECT_TRUE(all_finite(b));
  for (const auto& f : b.o_z)
    for (double r : f) {
      EXPECT_GT(r, 0.0);
      EXPECT_LE(r, kLidarMaxRange);
    }
  for (double ang : {b.o_g.bearing, b.o_gp.angle_difference, b.o_gp.path_direction, b.o_C.nodes[0].bearing}) {
    EXPECT_GT(ang, -kPi);
    EXPECT_LE(ang, kPi);
  }
}

TEST(StateNoise, DisabledIsIdentity) {
  ObservationBundle b;
  b.o_C.nodes.push_back({1.0, 0.5, 0.2, -0.1});
  std::mt19937_64 rng(1);
  const auto out = apply_state_noise(b, rng, NoiseConfig{});
  EXPECT_EQ(out.o_C.nodes[0].distance, 1.0);
  EXPECT_EQ(out.o_C.nodes[0].vx, 0.2);
}

TEST(StateNoise, UniformPerturbationsAreBounded) {
  NoiseConfig cfg;
  cfg.enabled = true;
  std::mt19937_64 rng(10);
  ObservationBundle b;
  b.o_C.nodes.push_back({2.0, 0.0, 0.5, 0.0});
  double max_dx = 0, max_dy = 0, sum_dx = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const auto out = apply_state_noise(b, rng, cfg);
    const auto& nd = out.o_C.nodes[0];
    const Vec2 p = from_polar({nd.distance, nd.bearing});
    max_dx = std::max(max_dx, std::abs(p.x - 2.0));
    max_dy = std::max(max_dy, std::abs(p.y));
    sum_dx += p.x - 2.0;
    EXPECT_GE(nd.vx, 0.4 - 1e-12);
    EXPECT_LE(nd.vx, 0.6 + 1e-12);
    EXPECT_GE(nd.vy, -0.1 - 1e-12);
    EXPECT_LE(nd.vy, 0.1 + 1e-12);
  }
  EXPECT_LE(max_dx, 0.1 + 1e-12);
  EXPECT_LE(max_dy, 0.1 + 1e-12);
  // the bounds are actually reached and the perturbation is centered
  EXPECT_GT(max_dx, 0.099);
  EXPECT_NEAR(sum_dx / n, 0.0, 0.002);
}

TEST(StateNoise, GaussianSwitch) {
  NoiseConfig cfg;
  cfg.enabled = true;
  cfg.gaussian = true;
  std::mt19937_64 rng(12);
  ObservationBundle b;
  b.o_C.nodes.push_back({2.0, 0.0, 0.0, 0.0});
  double sq = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const auto out = apply_state_noise(b, rng, cfg);
    sq += out.o_C.nodes[0].vx * out.o_C.nodes[0].vx;
  }
  EXPECT_NEAR(std::sqrt(sq / n), 0.1, 0.002);
}

TEST(Normalize, Examples) {
  ObservationBundle b;
  b.o_z[2][0] = 3.5;
  b.o_g = {2.0, -kPi};
  b.o_v = {1.0, -1.0};
  const auto n = normalize(b);
  EXPECT_EQ(n.current_scan()[0], 1.0);
  EXPECT_EQ(n.goal[1], -1.0);
  EXPECT_EQ(n.velocity[0], 1.0);
  EXPECT_EQ(n.velocity[1], -1.0);
}

TEST(Normalize, RoundTrip) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ur(1e-6, 3.5), ua(-kPi, kPi), ud(0, 20), uv(-1, 1);
  for (int s = 0; s < 200; ++s) {
    ObservationBundle b;
    for (auto& f : b.o_z)
      for (auto& r : f) r = ur(rng);
    b.o_g = {ud(rng), ua(rng)};
    b.o_v = {std::abs(uv(rng)), uv(rng)};
    b.o_gp = {ud(rng), ua(rng), ua(rng)};
    for (int k = 0; k < 5; ++k) b.o_C.nodes.push_back({ud(rng), ua(rng), uv(rng), uv(rng)});
    const auto r = denormalize(normalize(b));
    for (std::size_t f = 0; f < 3; ++f)
      for (std::size_t k = 0; k < kLidarBeams; ++k) EXPECT_NEAR(r.o_z[f][k], b.o_z[f][k], 1e-9);
    EXPECT_NEAR(r.o_g.distance, b.o_g.distance, 1e-9);
    EXPECT_NEAR(r.o_g.bearing, b.o_g.bearing, 1e-9);
    EXPECT_NEAR(r.o_v[1], b.o_v[1], 1e-9);
    EXPECT_NEAR(r.o_gp.path_direction, b.o_gp.path_direction, 1e-9);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_NEAR(r.o_C.nodes[k].distance, b.o_C.nodes[k].distance, 1e-9);
      EXPECT_NEAR(r.o_C.nodes[k].vy, b.o_C.nodes[k].vy, 1e-9);
    }
  }
}

TEST(NavEnv, ApproachingRobotsBecomeNodes) {
  Scenario sc;
  sc.config = open_world();
  // 5 m apart head-on; mutually visible once within LiDAR range
  sc.agents = {{{-2.5, 0}, 0.0, {5, 0}}, {{2.5, 0}, kPi, {-5, 0}}};
  NavEnv env(sc, EnvOptions{}, 1);
  const std::vector<Action> act(2, Action{0.5, 0.0});
  int visible_since = -1;
  for (int k = 0; k < 40 && !env.done(); ++k) {
    if (visible_since < 0 && env.scans(0).latest().ranges[0] < kLidarMaxRange) visible_since = k;
    if (visible_since >= 0 && k >= visible_since + 3) {
      EXPECT_GE(env.observation(0).o_C.node_count(), 1u);
      EXPECT_GE(env.observation(1).o_C.node_count(), 1u);
    }
    env.step(act);
  }
  EXPECT_GE(visible_since, 0);
}
