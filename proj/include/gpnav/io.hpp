#pragma once

// JSON forms of worlds and scenarios, JSON-lines episode logs and SVG rendering of logs.

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gpnav/error.hpp"
#include "gpnav/geometry.hpp"
#include "gpnav/obs.hpp"
#include "gpnav/planner.hpp"
#include "gpnav/reward.hpp"
#include "gpnav/scenarios.hpp"
#include "gpnav/sim.hpp"
#include "gpnav/tracker.hpp"

namespace gpnav {

using nlohmann::json;

inline json vec_json(Vec2 v) { return json::array({v.x, v.y}); }
inline Vec2 json_vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline json world_to_json(const WorldConfig& c) {
  json j;
  j["dt"] = c.dt;
  j["max_episode_time"] = c.max_episode_time;
  j["rng_seed"] = c.rng_seed;
  j["robot_radius"] = c.robot_radius;
  j["goal_tolerance"] = c.goal_tolerance;
  j["bounds"] = {{"min", vec_json(c.bounds.min)}, {"max", vec_json(c.bounds.max)}};
  j["circles"] = json::array();
  for (const auto& o : c.circles) j["circles"].push_back({{"center", vec_json(o.center)}, {"radius", o.radius}});
  j["walls"] = json::array();
  for (const auto& w : c.walls)
    j["walls"].push_back({{"a", vec_json(w.a)}, {"b", vec_json(w.b)}, {"thickness", w.thickness}});
  return j;
}

inline WorldConfig world_from_json(const json& j) {
  try {
    WorldConfig c;
    c.dt = j.value("dt", c.dt);
    c.max_episode_time = j.value("max_episode_time", c.max_episode_time);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.robot_radius = j.value("robot_radius", c.robot_radius);
    c.goal_tolerance = j.value("goal_tolerance", c.goal_tolerance);
    if (j.contains("bounds")) c.bounds = {json_vec(j["bounds"].at("min")), json_vec(j["bounds"].at("max"))};
    for (const auto& o : j.value("circles", json::array()))
      c.circles.push_back({json_vec(o.at("center")), o.at("radius").get<double>()});
    for (const auto& w : j.value("walls", json::array()))
      c.walls.push_back({json_vec(w.at("a")), json_vec(w.at("b")), w.value("thickness", 0.1)});
    validate(c);
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("bad world config: ") + e.what());
  }
}

inline json scenario_to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["world"] = world_to_json(s.config);
  j["agents"] = json::array();
  for (const auto& a : s.agents)
    j["agents"].push_back({{"start", vec_json(a.start)}, {"heading", a.heading}, {"goal", vec_json(a.goal)}});
  return j;
}

inline Scenario scenario_from_json(const json& j) {
  try {
    Scenario s;
    s.name = j.value("name", "custom");
    s.config = world_from_json(j.at("world"));
    for (const auto& a : j.at("agents"))
      s.agents.push_back({json_vec(a.at("start")), a.value("heading", 0.0), json_vec(a.at("goal"))});
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("bad scenario: ") + e.what());
  }
}

inline json read_json_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Config, "cannot open " + file);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, "malformed JSON in " + file + ": " + e.what());
  }
}

inline void write_json_file(const json& j, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + file);
  out << j.dump(2) << "\n";
}

struct LogOptions {
  bool trajectory = true;
  bool paths = false;
  bool scans = false;
  bool tracks = false;
  bool observations = false;
  bool rewards = false;

  bool any() const { return trajectory || paths || scans || tracks || observations || rewards; }
  bool needs_perception() const { return scans || tracks || observations; }
};

inline json observation_json(std::size_t id, const ObservationBundle& b, bool with_scans) {
  json j;
  j["id"] = id;
  j["o_g"] = {b.o_g.distance, b.o_g.bearing};
  j["o_v"] = {b.o_v[0], b.o_v[1]};
  j["o_gp"] = {b.o_gp.distance, b.o_gp.angle_difference, b.o_gp.path_direction};
  j["node_count"] = b.o_C.node_count();
  j["nodes"] = json::array();
  for (const auto& n : b.o_C.nodes) j["nodes"].push_back({n.distance, n.bearing, n.vx, n.vy});
  if (with_scans) j["o_z_latest"] = b.o_z.back();
  return j;
}

inline json reward_json(std::size_t id, const RewardTerms& r, Vec2 target) {
  static constexpr const char* kBranch[] = {"goal", "collision", "shaping"};
  return {{"id", id},
          {"total", r.total},
          {"branch", kBranch[static_cast<int>(r.branch)]},
          {"social", r.social},
          {"progress", r.progress},
          {"target", vec_json(target)}};
}

inline json tracks_json(std::size_t id, const std::vector<ClusterTrack>& tracks) {
  json arr = json::array();
  for (const auto& t : tracks)
    arr.push_back({{"track", t.id},
                   {"closest_point", vec_json(t.closest_point)},
                   {"velocity", vec_json(t.velocity)},
                   {"dynamic", t.classification == TrackClass::Dynamic},
                   {"misses", t.misses}});
  return {{"id", id}, {"tracks", arr}};
}

inline json robots_json(const World& w) {
  json arr = json::array();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto& r = w.robot(i);
    arr.push_back({{"id", i},
                   {"x", r.position.x},
                   {"y", r.position.y},
                   {"theta", r.heading},
                   {"v", r.linear_velocity},
                   {"w", r.angular_velocity},
                   {"status", std::string(to_string(r.status))}});
  }
  return arr;
}

/// One JSON object per line: a header record followed by one record per step.
class EpisodeLog {
 public:
  EpisodeLog() = default;
  explicit EpisodeLog(const std::string& file) : out_(file) {
    if (!out_) throw Error(ErrorCode::Io, "cannot write " + file);
  }
  bool is_open() const { return out_.is_open(); }
  void write(const json& j) { out_ << j.dump() << "\n"; }

 private:
  std::ofstream out_;
};

inline std::vector<json> read_jsonl(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Config, "cannot open " + file);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Config, "malformed log line in " + file + ": " + e.what());
    }
  }
  return out;
}

/// Static map, per-robot traces, starts (circles) and goals (crosses).
inline std::string render_svg(const std::vector<json>& log, double pixels_per_meter = 40.0) {
  if (log.empty() || log.front().value("type", "") != "header") throw Error(ErrorCode::Config, "log has no header");
  const Scenario sc = scenario_from_json(log.front().at("scenario"));
  const auto& b = sc.config.bounds;
  const double s = pixels_per_meter;
  auto X = [&](double x) { return (x - b.min.x) * s; };
  auto Y = [&](double y) { return (b.max.y - y) * s; };
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << b.width() * s << "\" height=\"" << b.height() * s
    << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& c : sc.config.circles)
    o << "<circle cx=\"" << X(c.center.x) << "\" cy=\"" << Y(c.center.y) << "\" r=\"" << c.radius * s
      << "\" fill=\"#555\"/>\n";
  for (const auto& w : sc.config.walls) {
    const Box2 bx = wall_box(w);
    const Vec2 n{-bx.axis.y, bx.axis.x};
    const Vec2 corners[4] = {bx.center + bx.axis * bx.half_length + n * bx.half_width,
                             bx.center - bx.axis * bx.half_length + n * bx.half_width,
                             bx.center - bx.axis * bx.half_length - n * bx.half_width,
                             bx.center + bx.axis * bx.half_length - n * bx.half_width};
    o << "<polygon fill=\"#333\" points=\"";
    for (const auto& c : corners) o << X(c.x) << "," << Y(c.y) << " ";
    o << "\"/>\n";
  }
  const std::size_t n = sc.agents.size();
  std::vector<std::vector<Vec2>> traces(n);
  for (std::size_t k = 1; k < log.size(); ++k) {
    if (log[k].value("type", "") != "step") continue;
    for (const auto& r : log[k].at("robots")) {
      const std::size_t id = r.at("id").get<std::size_t>();
      if (id < n) traces[id].push_back({r.at("x").get<double>(), r.at("y").get<double>()});
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    char color[16];
    std::snprintf(color, sizeof color, "hsl(%zu,70%%,45%%)", (i * 360) / std::max<std::size_t>(n, 1));
    const auto& a = sc.agents[i];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << X(a.start.x) << ","
      << Y(a.start.y) << " ";
    for (const auto& p : traces[i]) o << X(p.x) << "," << Y(p.y) << " ";
    o << "\"/>\n";
    o << "<circle cx=\"" << X(a.start.x) << "\" cy=\"" << Y(a.start.y) << "\" r=\"" << sc.config.robot_radius * s
      << "\" fill=\"none\" stroke=\"" << color << "\"/>\n";
    const double g = 0.15 * s;
    o << "<path stroke=\"" << color << "\" stroke-width=\"2\" d=\"M" << X(a.goal.x) - g << "," << Y(a.goal.y) - g
      << " L" << X(a.goal.x) + g << "," << Y(a.goal.y) + g << " M" << X(a.goal.x) - g << "," << Y(a.goal.y) + g
      << " L" << X(a.goal.x) + g << "," << Y(a.goal.y) - g << "\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace gpnav
