#pragma once

#include <array>
#include <cstddef>
#include <random>

#include "gpnav/geometry.hpp"
#include "gpnav/sim.hpp"

namespace gpnav {

inline constexpr int kLidarBeams = 120;
inline constexpr double kLidarMaxRange = 3.5;
inline constexpr double kLidarMinRange = 1e-6;
inline constexpr int kScanHistoryLength = 3;

/// Beam k points at heading + 2*pi*k/120 (counter-clockwise, beam 0 forward).
struct LidarScan {
  std::array<double, kLidarBeams> ranges{};
  double timestamp = 0.0;
  double max_range = kLidarMaxRange;

  static constexpr double beam_angle(int k) { return 2.0 * kPi * k / kLidarBeams; }
  bool is_hit(int k) const { return ranges[static_cast<std::size_t>(k)] < max_range; }
};

inline double cast_ray(const World& world, std::size_t agent_index, Vec2 origin, Vec2 dir, double max_range) {
  double best = max_range;
  const auto& cfg = world.config();
  for (const auto& c : cfg.circles)
    if (auto t = ray_intersect(origin, dir, c)) best = std::min(best, *t);
  for (const auto& w : cfg.walls)
    if (auto t = ray_intersect(origin, dir, w)) best = std::min(best, *t);
  const auto robots = world.robots();
  for (std::size_t j = 0; j < robots.size(); ++j) {
    if (j == agent_index) continue;
    if (auto t = ray_intersect(origin, dir, CircleObstacle{robots[j].position, robots[j].radius}))
      best = std::min(best, *t);
  }
  return std::max(best, kLidarMinRange);
}

inline LidarScan raycast(const World& world, std::size_t agent_index, double max_range = kLidarMaxRange) {
  const RobotState& me = world.robot(agent_index);
  LidarScan scan;
  scan.timestamp = world.sim_time();
  scan.max_range = max_range;
  for (int k = 0; k < kLidarBeams; ++k) {
    const Vec2 dir = unit_vector(me.heading + LidarScan::beam_angle(k));
    scan.ranges[static_cast<std::size_t>(k)] = cast_ray(world, agent_index, me.position, dir, max_range);
  }
  return scan;
}

/// Multiplicative Gaussian range noise r * (1 + eps), eps ~ N(0, sigma), re-clipped.
template <class Rng>
LidarScan apply_lidar_noise(LidarScan scan, Rng& rng, double sigma = 0.035) {
  if (sigma <= 0.0) return scan;
  std::normal_distribution<double> eps(0.0, sigma);
  for (auto& r : scan.ranges) r = std::clamp(r * (1.0 + eps(rng)), kLidarMinRange, scan.max_range);
  return scan;
}

/// Last three scans, oldest first.
class ScanHistory {
 public:
  ScanHistory() = default;
  explicit ScanHistory(const LidarScan& first) { reset(first); }

  void reset(const LidarScan& first) { frames_.fill(first); }

  void push(const LidarScan& scan) {
    frames_[0] = frames_[1];
    frames_[1] = frames_[2];
    frames_[2] = scan;
  }

  const LidarScan& latest() const { return frames_[kScanHistoryLength - 1]; }
  const std::array<LidarScan, kScanHistoryLength>& frames() const { return frames_; }

 private:
  std::array<LidarScan, kScanHistoryLength> frames_{};
};

}  // namespace gpnav
