#pragma once

// Per-agent observation: three LiDAR frames, goal, own velocity, running target features and
// the neighbor graph built from dynamic tracks.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gpnav/error.hpp"
#include "gpnav/geometry.hpp"
#include "gpnav/lidar.hpp"
#include "gpnav/planner.hpp"
#include "gpnav/sim.hpp"
#include "gpnav/tracker.hpp"

namespace gpnav {

struct NeighborNode {
  /// Body-frame polar position of the cluster's closest point.
  double distance = 0.0;
  double bearing = 0.0;
  /// Cluster velocity expressed in the body frame.
  double vx = 0.0;
  double vy = 0.0;
};

/// Nodes are fully connected among themselves and to the ego node; edges are implicit.
struct NeighborGraph {
  std::vector<NeighborNode> nodes;
  std::size_t node_count() const { return nodes.size(); }
};

struct PathFeatures {
  double distance = 0.0;
  /// Bearing of the target point in the body frame.
  double angle_difference = 0.0;
  /// Path tangent at the target relative to the robot heading.
  double path_direction = 0.0;
};

struct ObservationBundle {
  std::array<std::array<double, kLidarBeams>, kScanHistoryLength> o_z{};
  Polar o_g;
  std::array<double, 2> o_v{};
  PathFeatures o_gp;
  NeighborGraph o_C;
};

struct AblationConfig {
  bool no_global_path = false;
  bool no_gnn = false;
};

inline AblationConfig parse_ablation(std::string_view s) {
  if (s == "none") return {};
  if (s == "no-gp") return {true, false};
  if (s == "no-gnn") return {false, true};
  throw Error(ErrorCode::Config, "unknown ablation '" + std::string(s) + "' (none|no-gp|no-gnn)");
}

inline std::string_view to_string(const AblationConfig& a) {
  if (a.no_global_path && a.no_gnn) return "no-gp+no-gnn";
  if (a.no_global_path) return "no-gp";
  if (a.no_gnn) return "no-gnn";
  return "none";
}

struct NoiseConfig {
  bool enabled = false;
  double position = 0.1;
  double velocity = 0.1;
  double lidar_sigma = 0.035;
  /// Uniform on [-position, position] per axis unless set; then Gaussian with that sigma.
  bool gaussian = false;
};

struct ObsConfig {
  std::size_t max_neighbors = 16;
  bool include_static_tracks = false;
};

inline ObservationBundle build_observation(const World& world, std::size_t agent_index, const ScanHistory& scans,
                                           const std::vector<ClusterTrack>& tracks, const TargetPoint& target,
                                           const AblationConfig& ablation = {}, const ObsConfig& cfg = {}) {
  const RobotState& me = world.robot(agent_index);
  ObservationBundle b;
  for (int f = 0; f < kScanHistoryLength; ++f) b.o_z[static_cast<std::size_t>(f)] = scans.frames()[static_cast<std::size_t>(f)].ranges;
  b.o_g = to_polar(to_body(me.goal, me.position, me.heading));
  b.o_v = {me.linear_velocity, me.angular_velocity};
  if (!ablation.no_global_path) {
    const Polar tp = to_polar(to_body(target.position, me.position, me.heading));
    b.o_gp = {tp.distance, tp.bearing, wrap_angle(target.path_direction - me.heading)};
  }
  if (!ablation.no_gnn) {
    for (const auto& t : tracks) {
      if (t.misses != 0) continue;
      if (t.classification == TrackClass::Static && !cfg.include_static_tracks) continue;
      const Polar p = to_polar(to_body(t.closest_point, me.position, me.heading));
      const Vec2 v = rotate(t.velocity, -me.heading);
      b.o_C.nodes.push_back({p.distance, p.bearing, v.x, v.y});
    }
    std::stable_sort(b.o_C.nodes.begin(), b.o_C.nodes.end(),
                     [](const NeighborNode& a, const NeighborNode& c) { return a.distance < c.distance; });
    if (b.o_C.nodes.size() > cfg.max_neighbors) b.o_C.nodes.resize(cfg.max_neighbors);
  }
  return b;
}

template <class Rng>
double sample_state_noise(Rng& rng, double magnitude, bool gaussian) {
  if (magnitude <= 0.0) return 0.0;
  if (gaussian) return std::normal_distribution<double>(0.0, magnitude)(rng);
  return std::uniform_real_distribution<double>(-magnitude, magnitude)(rng);
}

/// Perturbs neighbor positions (per body axis) and velocities; LiDAR noise lives in the lidar module.
template <class Rng>
ObservationBundle apply_state_noise(ObservationBundle b, Rng& rng, const NoiseConfig& noise) {
  if (!noise.enabled) return b;
  for (auto& n : b.o_C.nodes) {
    Vec2 p = from_polar({n.distance, n.bearing});
    p.x += sample_state_noise(rng, noise.position, noise.gaussian);
    p.y += sample_state_noise(rng, noise.position, noise.gaussian);
    const Polar q = to_polar(p);
    n.distance = q.distance;
    n.bearing = q.bearing;
    n.vx += sample_state_noise(rng, noise.velocity, noise.gaussian);
    n.vy += sample_state_noise(rng, noise.velocity, noise.gaussian);
  }
  return b;
}

/// Network-ready features. Ranges are divided by the LiDAR max range, distances by
/// `distance_scale`, angles by pi and velocities by their action bounds.
struct NormalizedObservation {
  std::array<double, kScanHistoryLength * kLidarBeams> scans{};
  std::array<double, 2> goal{};
  std::array<double, 2> velocity{};
  std::array<double, 3> path{};
  std::vector<std::array<double, 4>> nodes;

  static constexpr std::size_t kFlatSize = kScanHistoryLength * kLidarBeams + 2 + 2 + 3;
  /// Current (latest) frame.
  const double* current_scan() const { return scans.data() + (kScanHistoryLength - 1) * kLidarBeams; }
};

struct NormalizationConfig {
  double distance_scale = 10.0;
  double max_range = kLidarMaxRange;
  double max_speed = kMaxLinearSpeed;
  double max_turn_rate = kMaxAngularSpeed;
};

inline NormalizedObservation normalize(const ObservationBundle& b, const NormalizationConfig& c = {}) {
  NormalizedObservation n;
  for (std::size_t f = 0; f < b.o_z.size(); ++f)
    for (std::size_t k = 0; k < kLidarBeams; ++k) n.scans[f * kLidarBeams + k] = b.o_z[f][k] / c.max_range;
  n.goal = {b.o_g.distance / c.distance_scale, b.o_g.bearing / kPi};
  n.velocity = {b.o_v[0] / c.max_speed, b.o_v[1] / c.max_turn_rate};
  n.path = {b.o_gp.distance / c.distance_scale, b.o_gp.angle_difference / kPi, b.o_gp.path_direction / kPi};
  n.nodes.reserve(b.o_C.nodes.size());
  for (const auto& nd : b.o_C.nodes)
    n.nodes.push_back({nd.distance / c.distance_scale, nd.bearing / kPi, nd.vx / c.max_speed, nd.vy / c.max_speed});
  return n;
}

/// Inverse of normalize.
inline ObservationBundle denormalize(const NormalizedObservation& n, const NormalizationConfig& c = {}) {
  ObservationBundle b;
  for (std::size_t f = 0; f < b.o_z.size(); ++f)
    for (std::size_t k = 0; k < kLidarBeams; ++k) b.o_z[f][k] = n.scans[f * kLidarBeams + k] * c.max_range;
  b.o_g = {n.goal[0] * c.distance_scale, n.goal[1] * kPi};
  b.o_v = {n.velocity[0] * c.max_speed, n.velocity[1] * c.max_turn_rate};
  b.o_gp = {n.path[0] * c.distance_scale, n.path[1] * kPi, n.path[2] * kPi};
  for (const auto& nd : n.nodes)
    b.o_C.nodes.push_back({nd[0] * c.distance_scale, nd[1] * kPi, nd[2] * c.max_speed, nd[3] * c.max_speed});
  return b;
}

inline bool all_finite(const ObservationBundle& b) {
  for (const auto& f : b.o_z)
    for (double r : f)
      if (!std::isfinite(r)) return false;
  const double xs[] = {b.o_g.distance, b.o_g.bearing, b.o_v[0], b.o_v[1],
                       b.o_gp.distance, b.o_gp.angle_difference, b.o_gp.path_direction};
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  for (const auto& n : b.o_C.nodes)
    if (!std::isfinite(n.distance) || !std::isfinite(n.bearing) || !std::isfinite(n.vx) || !std::isfinite(n.vy))
      return false;
  return true;
}

}  // namespace gpnav
