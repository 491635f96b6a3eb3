#pragma once

// Multi-robot episode wrapper: global paths, running targets, per-robot perception
// (LiDAR history and cluster tracker), noisy observations and rewards.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "gpnav/error.hpp"
#include "gpnav/lidar.hpp"
#include "gpnav/obs.hpp"
#include "gpnav/planner.hpp"
#include "gpnav/reward.hpp"
#include "gpnav/scenarios.hpp"
#include "gpnav/sim.hpp"
#include "gpnav/tracker.hpp"

namespace gpnav {

struct EnvOptions {
  int horizon = 5;
  double grid_resolution = 0.1;
  NoiseConfig noise;
  AblationConfig ablation;
  ObsConfig obs;
  TrackerConfig tracker;
  RewardConfig reward;
  NormalizationConfig normalization;
  /// LiDAR and tracking are only needed by learned controllers.
  bool perception = true;
};

class NavEnv {
 public:
  struct StepResult {
    StepReport report;
    /// Reward terms for robots that were Active before the step; others hold zeros.
    std::vector<RewardTerms> rewards;
    std::vector<bool> was_active;
  };

  NavEnv(const Scenario& scenario, EnvOptions opts, std::uint64_t seed)
      : opts_(std::move(opts)), world_(scenario.config, scenario.agents), rng_(seed) {
    grid_ = rasterize(world_.config(), opts_.grid_resolution);
    const std::size_t n = world_.size();
    paths_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = world_.robot(i);
      paths_.push_back(astar(grid_, r.position, r.goal));
    }
    targets_.resize(n);
    update_targets();
    if (opts_.perception) {
      const Tracker proto = Tracker::for_world(world_.config(), opts_.tracker, opts_.grid_resolution);
      trackers_.assign(n, proto);
      histories_.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const LidarScan s = sense(i);
        histories_[i].reset(s);
        trackers_[i].update(s, world_.robot(i).position, world_.robot(i).heading, world_.config().dt);
      }
    }
  }

  const World& world() const { return world_; }
  const EnvOptions& options() const { return opts_; }
  const OccupancyGrid& grid() const { return grid_; }
  const GlobalPath& path(std::size_t i) const { return paths_.at(i); }
  const TargetPoint& target(std::size_t i) const { return targets_.at(i); }
  std::size_t size() const { return world_.size(); }
  bool done() const { return world_.done(); }
  std::mt19937_64& rng() { return rng_; }

  const ScanHistory& scans(std::size_t i) const { return histories_.at(i); }
  const std::vector<ClusterTrack>& tracks(std::size_t i) const { return trackers_.at(i).tracks(); }

  /// Running target with the goal substituted under the no-global-path ablation.
  Vec2 reward_target(std::size_t i) const {
    return opts_.ablation.no_global_path ? world_.robot(i).goal : targets_[i].position;
  }

  /// Draws fresh state noise on every call.
  ObservationBundle observation(std::size_t i) {
    if (!opts_.perception) throw Error(ErrorCode::Config, "observations need perception enabled");
    auto b = build_observation(world_, i, histories_[i], trackers_[i].tracks(), targets_[i], opts_.ablation, opts_.obs);
    return apply_state_noise(std::move(b), rng_, opts_.noise);
  }

  NormalizedObservation normalized_observation(std::size_t i) {
    return normalize(observation(i), opts_.normalization);
  }

  StepResult step(std::span<const Action> actions) {
    StepResult out;
    const std::size_t n = world_.size();
    std::vector<Vec2> prev(n);
    out.was_active.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      prev[i] = world_.robot(i).position;
      out.was_active[i] = world_.robot(i).active();
    }
    out.report = gpnav::step(world_, actions);
    update_targets();
    out.rewards.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!out.was_active[i]) continue;
      out.rewards[i] = step_reward_terms(out.report.status[i], out.report.d_min[i], prev[i], world_.robot(i).position,
                                         reward_target(i), opts_.reward);
    }
    if (opts_.perception) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!world_.robot(i).active()) continue;
        const LidarScan s = sense(i);
        histories_[i].push(s);
        trackers_[i].update(s, world_.robot(i).position, world_.robot(i).heading, world_.config().dt);
      }
    }
    return out;
  }

 private:
  LidarScan sense(std::size_t i) {
    LidarScan s = raycast(world_, i);
    if (opts_.noise.enabled) s = apply_lidar_noise(std::move(s), rng_, opts_.noise.lidar_sigma);
    return s;
  }

  void update_targets() {
    for (std::size_t i = 0; i < world_.size(); ++i)
      targets_[i] = running_target(paths_[i], world_.robot(i).position, opts_.horizon);
  }

  EnvOptions opts_;
  World world_;
  std::mt19937_64 rng_;
  OccupancyGrid grid_;
  std::vector<GlobalPath> paths_;
  std::vector<TargetPoint> targets_;
  std::vector<Tracker> trackers_;
  std::vector<ScanHistory> histories_;
};

}  // namespace gpnav
