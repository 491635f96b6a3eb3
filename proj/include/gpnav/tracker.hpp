#pragma once

// Model-free cluster detection and tracking on 2-D LiDAR scans.
//
// Detection groups consecutive-beam returns by Euclidean gap. Association is hierarchical:
// a coarse pass assigns clusters lying on the known static map to the background, the rest
// are matched to existing tracks by predicted closest point and aligned with a trimmed
// point-to-line ICP; a fine pass rejects matches whose implied speed is implausible.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "gpnav/geometry.hpp"
#include "gpnav/lidar.hpp"
#include "gpnav/planner.hpp"

namespace gpnav {

enum class TrackClass : std::uint8_t { Static, Dynamic };

/// How a matched track's displacement between frames is measured.
enum class DisplacementSource : std::uint8_t { Icp, ClosestPoint };

struct TrackerConfig {
  double cluster_gap = 0.3;
  double gating_radius = 0.6;
  double v_max_gate = 1.5;
  int grace_steps = 3;
  double ema_beta = 0.5;
  /// Inflation of the static map used for the background test.
  double static_margin = 0.1;
  /// Fraction of a cluster's points on static occupancy above which it is background.
  double static_fraction = 0.5;
  int icp_iterations = 15;
  double icp_trim_factor = 3.0;
  /// Weight pulling the ICP translation toward the constant-velocity prediction; it only
  /// matters along directions the point set leaves unconstrained.
  double icp_prior_weight = 0.05;
  DisplacementSource displacement = DisplacementSource::Icp;
};

struct Cluster {
  std::vector<Vec2> points;
  Vec2 centroid;
  Vec2 closest_point;
};

struct ClusterTrack {
  int id = 0;
  Vec2 closest_point;
  Vec2 velocity;
  int age = 1;
  TrackClass classification = TrackClass::Dynamic;
  /// Consecutive frames without a match.
  int misses = 0;
  /// Points of the last matched cluster, world frame.
  std::vector<Vec2> points;
};

/// World-frame position of beam k's return for a robot at `origin` with `heading`.
inline Vec2 beam_point(const LidarScan& scan, int k, Vec2 origin, double heading) {
  return origin + unit_vector(heading + LidarScan::beam_angle(k)) * scan.ranges[static_cast<std::size_t>(k)];
}

inline Cluster make_cluster(std::vector<Vec2> pts, Vec2 observer) {
  Cluster c;
  c.points = std::move(pts);
  Vec2 sum;
  double best = kInf;
  for (const auto& p : c.points) {
    sum += p;
    const double d = norm_sq(p - observer);
    if (d < best) {
      best = d;
      c.closest_point = p;
    }
  }
  c.centroid = sum / static_cast<double>(c.points.size());
  return c;
}

/// Groups hits of consecutive beams whose points are within `gap` of each other.
/// Max-range beams are dropped; the 119 -> 0 seam is joined when both sides are hits.
inline std::vector<Cluster> cluster_scan(const LidarScan& scan, Vec2 observer, double heading, double gap = 0.3) {
  std::vector<std::vector<Vec2>> groups;
  std::vector<int> first_beam;
  int prev_k = -2;
  Vec2 prev_p;
  for (int k = 0; k < kLidarBeams; ++k) {
    if (!scan.is_hit(k)) continue;
    const Vec2 p = beam_point(scan, k, observer, heading);
    if (prev_k == k - 1 && distance(p, prev_p) <= gap) {
      groups.back().push_back(p);
    } else {
      groups.push_back({p});
      first_beam.push_back(k);
    }
    prev_k = k;
    prev_p = p;
  }
  if (groups.size() >= 2 && first_beam.front() == 0 && prev_k == kLidarBeams - 1 &&
      distance(groups.back().back(), groups.front().front()) <= gap) {
    auto& tail = groups.back();
    tail.insert(tail.end(), groups.front().begin(), groups.front().end());
    groups.front() = std::move(tail);
    groups.pop_back();
  }
  std::vector<Cluster> out;
  out.reserve(groups.size());
  for (auto& g : groups) out.push_back(make_cluster(std::move(g), observer));
  return out;
}

namespace detail {

/// Closest point on the polyline through `pts` (in order) to p.
inline Vec2 closest_on_polyline(const std::vector<Vec2>& pts, Vec2 p) {
  if (pts.size() == 1) return pts.front();
  Vec2 best = pts.front();
  double best_d = kInf;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const Vec2 a = pts[i];
    const Vec2 ab = pts[i + 1] - a;
    const double len2 = norm_sq(ab);
    const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
    const Vec2 q = a + ab * t;
    const double d = norm_sq(p - q);
    if (d < best_d) {
      best_d = d;
      best = q;
    }
  }
  return best;
}

}  // namespace detail

/// Translation aligning `source` onto the surface sampled by `target`: trimmed point-to-line
/// ICP starting from `prior`. Residuals above trim_factor * median are rejected as outliers.
inline Vec2 icp_translation(const std::vector<Vec2>& source, const std::vector<Vec2>& target, Vec2 prior,
                            const TrackerConfig& cfg) {
  Vec2 t = prior;
  if (source.empty() || target.empty()) return t;
  std::vector<Vec2> q(source.size());
  std::vector<double> r(source.size());
  for (int it = 0; it < cfg.icp_iterations; ++it) {
    for (std::size_t i = 0; i < source.size(); ++i) {
      q[i] = detail::closest_on_polyline(target, source[i] + t);
      r[i] = distance(source[i] + t, q[i]);
    }
    std::vector<double> sorted = r;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double cutoff = cfg.icp_trim_factor * median;
    // Normal equations of sum (n.(s+t-q))^2 + w |t - prior|^2, with n the residual
    // direction (point-to-line) or the full residual when it vanishes.
    double a11 = cfg.icp_prior_weight, a12 = 0.0, a22 = cfg.icp_prior_weight;
    double b1 = cfg.icp_prior_weight * prior.x, b2 = cfg.icp_prior_weight * prior.y;
    std::size_t used = 0;
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (median > 1e-12 && r[i] > cutoff) continue;
      const Vec2 s = source[i];
      const Vec2 e = q[i] - s;  // we want t such that n.t = n.e
      const Vec2 d = q[i] - (s + t);
      const double dn = norm(d);
      if (dn < 1e-12) {
        // Already on the surface: constrain along both axes lightly.
        a11 += 1e-3; a22 += 1e-3;
        b1 += 1e-3 * t.x; b2 += 1e-3 * t.y;
        ++used;
        continue;
      }
      const Vec2 n = d / dn;
      const double rhs = dot(n, e);
      a11 += n.x * n.x; a12 += n.x * n.y; a22 += n.y * n.y;
      b1 += n.x * rhs; b2 += n.y * rhs;
      ++used;
    }
    if (used == 0) break;
    const double detm = a11 * a22 - a12 * a12;
    if (std::abs(detm) < 1e-15) break;
    const Vec2 next{(a22 * b1 - a12 * b2) / detm, (a11 * b2 - a12 * b1) / detm};
    const double change = distance(next, t);
    t = next;
    if (change < 1e-7) break;
  }
  return t;
}

/// Constant-velocity EMA update from a measured displacement over dt.
/// A track on its first observation has zero velocity; on its second the raw rate is taken.
inline Vec2 estimate_velocity(const ClusterTrack& track, Vec2 displacement, double dt, double beta = 0.5) {
  const Vec2 measured = displacement / dt;
  if (track.age <= 1) return measured;
  return track.velocity * (1.0 - beta) + measured * beta;
}

inline bool is_static_cluster(const Cluster& c, const OccupancyGrid& static_grid, double fraction) {
  std::size_t on = 0;
  for (const auto& p : c.points)
    if (static_grid.occupied_at(p)) ++on;
  return static_cast<double>(on) >= fraction * static_cast<double>(c.points.size()) && on > 0;
}

/// One association round. `next_id` supplies fresh track ids and is advanced.
inline std::vector<ClusterTrack> associate(const std::vector<ClusterTrack>& prev_tracks,
                                           const std::vector<Cluster>& clusters, const OccupancyGrid& static_grid,
                                           double dt, const TrackerConfig& cfg, int& next_id) {
  std::vector<ClusterTrack> out;
  std::vector<bool> cluster_static(clusters.size());
  for (std::size_t c = 0; c < clusters.size(); ++c)
    cluster_static[c] = is_static_cluster(clusters[c], static_grid, cfg.static_fraction);

  struct Candidate {
    double cost;
    std::size_t track;
    std::size_t cluster;
  };
  std::vector<Candidate> cands;
  for (std::size_t t = 0; t < prev_tracks.size(); ++t) {
    const auto& tr = prev_tracks[t];
    const Vec2 predicted = tr.closest_point + tr.velocity * dt;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if ((tr.classification == TrackClass::Static) != cluster_static[c]) continue;
      const double d = distance(predicted, clusters[c].closest_point);
      if (d <= cfg.gating_radius) cands.push_back({d, t, c});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    if (a.track != b.track) return a.track < b.track;
    return a.cluster < b.cluster;
  });

  std::vector<bool> track_used(prev_tracks.size(), false);
  std::vector<bool> cluster_used(clusters.size(), false);
  for (const auto& cand : cands) {
    if (track_used[cand.track] || cluster_used[cand.cluster]) continue;
    const auto& tr = prev_tracks[cand.track];
    const auto& cl = clusters[cand.cluster];
    if (tr.classification == TrackClass::Static) {
      ClusterTrack upd = tr;
      upd.closest_point = cl.closest_point;
      upd.points = cl.points;
      upd.velocity = {};
      upd.age += 1;
      upd.misses = 0;
      out.push_back(std::move(upd));
      track_used[cand.track] = cluster_used[cand.cluster] = true;
      continue;
    }
    // Over missed frames the prediction horizon grows.
    const double elapsed = dt * static_cast<double>(tr.misses + 1);
    Vec2 displacement;
    if (cfg.displacement == DisplacementSource::Icp) {
      displacement = icp_translation(tr.points, cl.points, tr.velocity * elapsed, cfg);
    } else {
      displacement = cl.closest_point - tr.closest_point;
    }
    // Fine consistency gate on the implied speed.
    if (norm(displacement) / elapsed > cfg.v_max_gate) continue;
    ClusterTrack upd = tr;
    upd.velocity = estimate_velocity(tr, displacement, elapsed, cfg.ema_beta);
    upd.closest_point = cl.closest_point;
    upd.points = cl.points;
    upd.age += 1;
    upd.misses = 0;
    out.push_back(std::move(upd));
    track_used[cand.track] = cluster_used[cand.cluster] = true;
  }

  // Unmatched tracks coast for grace_steps frames.
  for (std::size_t t = 0; t < prev_tracks.size(); ++t) {
    if (track_used[t]) continue;
    ClusterTrack coast = prev_tracks[t];
    coast.misses += 1;
    if (coast.misses > cfg.grace_steps) continue;
    out.push_back(std::move(coast));
  }

  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (cluster_used[c]) continue;
    ClusterTrack nt;
    nt.id = next_id++;
    nt.closest_point = clusters[c].closest_point;
    nt.points = clusters[c].points;
    nt.classification = cluster_static[c] ? TrackClass::Static : TrackClass::Dynamic;
    out.push_back(std::move(nt));
  }
  std::sort(out.begin(), out.end(), [](const ClusterTrack& a, const ClusterTrack& b) { return a.id < b.id; });
  return out;
}

/// Per-observer tracker owning its track store.
class Tracker {
 public:
  Tracker() = default;
  Tracker(OccupancyGrid static_grid, TrackerConfig cfg) : grid_(std::move(static_grid)), cfg_(cfg) {}

  /// Builds the background grid from the world's static obstacles.
  static Tracker for_world(const WorldConfig& world, TrackerConfig cfg = {}, double resolution = 0.1) {
    return Tracker(rasterize(world, resolution, cfg.static_margin), cfg);
  }

  const std::vector<ClusterTrack>& update(const LidarScan& scan, Vec2 observer, double heading, double dt) {
    const auto clusters = cluster_scan(scan, observer, heading, cfg_.cluster_gap);
    tracks_ = associate(tracks_, clusters, grid_, dt, cfg_, next_id_);
    return tracks_;
  }

  void reset() {
    tracks_.clear();
    next_id_ = 0;
  }

  const std::vector<ClusterTrack>& tracks() const { return tracks_; }
  const TrackerConfig& config() const { return cfg_; }
  const OccupancyGrid& static_grid() const { return grid_; }

 private:
  OccupancyGrid grid_;
  TrackerConfig cfg_;
  std::vector<ClusterTrack> tracks_;
  int next_id_ = 0;
};

}  // namespace gpnav
