#pragma once

// Episode runner with the three controllers, per-robot outcomes, aggregate metrics and
// CSV / table reports.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gpnav/env.hpp"
#include "gpnav/error.hpp"
#include "gpnav/io.hpp"
#include "gpnav/orca.hpp"
#include "gpnav/policy.hpp"
#include "gpnav/scenarios.hpp"

namespace gpnav {

enum class ControllerKind : std::uint8_t { Policy, Orca, Straight };

constexpr std::string_view to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::Policy: return "policy";
    case ControllerKind::Orca: return "orca";
    case ControllerKind::Straight: return "straight";
  }
  return "unknown";
}

inline ControllerKind parse_controller(std::string_view s) {
  if (s == "policy") return ControllerKind::Policy;
  if (s == "orca") return ControllerKind::Orca;
  if (s == "straight") return ControllerKind::Straight;
  throw Error(ErrorCode::Config, "unknown controller '" + std::string(s) + "' (orca|policy|straight)");
}

struct RunConfig {
  ScenarioSpec spec;
  /// Replaces generation from `spec` when set (e.g. a scenario loaded from JSON).
  std::optional<Scenario> fixed;
  ControllerKind controller = ControllerKind::Orca;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  EnvOptions env;
  OrcaConfig orca;
  std::shared_ptr<const Policy<float>> policy;
  /// Sample actions instead of taking the mean.
  bool stochastic = false;
  /// 0 picks the hardware concurrency.
  std::size_t threads = 0;
  LogOptions log;
  /// Per-trial JSON-lines logs go here when non-empty.
  std::string log_dir;
};

struct AgentOutcome {
  RobotStatus status = RobotStatus::Active;
  double travel_time = 0.0;
  double distance = 0.0;
  double path_length = 0.0;
  /// Time to cover the line-of-sight shortened plan at full speed, minus the goal tolerance.
  double lower_bound = 0.0;
};

struct EpisodeResult {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  double sim_time = 0.0;
  std::vector<AgentOutcome> agents;
};

struct EpisodeMetrics {
  std::size_t robots = 0;
  std::size_t successes = 0;
  std::size_t collisions = 0;
  std::size_t stuck = 0;
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double stuck_rate = 0.0;
  /// Over successful robots only; NaN when there are none.
  double extra_time = std::nan("");
  double extra_time_ratio = std::nan("");
  double average_speed = 0.0;
};

/// Full speed toward the running target, capped so the last step does not overshoot the goal.
inline Vec2 preferred_velocity(const NavEnv& env, std::size_t i, double max_speed = kMaxLinearSpeed) {
  const auto& r = env.world().robot(i);
  Vec2 d = env.target(i).position - r.position;
  if (norm(d) < 1e-9) d = r.goal - r.position;
  const double n = norm(d);
  if (n < 1e-9) return {};
  const double speed = std::min(max_speed, distance(r.position, r.goal) / env.world().config().dt);
  return d / n * speed;
}

inline Action straight_action(const NavEnv& env, std::size_t i, double turn_gain = 1.5) {
  return nh_track(preferred_velocity(env, i), env.world().robot(i).heading, turn_gain);
}

/// Ground-truth neighbors within range, perturbed by the state-noise protocol when enabled.
template <class Rng>
OrcaNeighbors orca_neighbors(const World& world, std::size_t i, const OrcaConfig& cfg, const NoiseConfig& noise,
                             Rng& rng) {
  OrcaNeighbors nb;
  const auto& me = world.robot(i);
  std::vector<std::pair<double, std::size_t>> near;
  for (std::size_t j = 0; j < world.size(); ++j) {
    if (j == i) continue;
    const double d = distance(me.position, world.robot(j).position) - world.robot(j).radius - me.radius;
    if (d <= cfg.neighbor_range) near.push_back({d, j});
  }
  std::sort(near.begin(), near.end());
  if (near.size() > cfg.max_neighbors) near.resize(cfg.max_neighbors);
  for (const auto& [d, j] : near) {
    const auto& o = world.robot(j);
    OrcaDisc disc{o.position, o.velocity(), o.radius, o.active() ? 0.5 : 1.0};
    if (noise.enabled) {
      disc.position.x += sample_state_noise(rng, noise.position, noise.gaussian);
      disc.position.y += sample_state_noise(rng, noise.position, noise.gaussian);
      disc.velocity.x += sample_state_noise(rng, noise.velocity, noise.gaussian);
      disc.velocity.y += sample_state_noise(rng, noise.velocity, noise.gaussian);
    }
    nb.agents.push_back(disc);
  }
  for (const auto& c : world.config().circles)
    if (signed_distance(me.position, c) - me.radius <= cfg.neighbor_range) nb.circles.push_back(c);
  for (const auto& w : world.config().walls)
    if (signed_distance(me.position, w) - me.radius <= cfg.neighbor_range) nb.walls.push_back(w);
  return nb;
}

inline Action orca_action(NavEnv& env, std::size_t i, const OrcaConfig& cfg) {
  const auto& world = env.world();
  const auto& me = world.robot(i);
  const OrcaNeighbors nb = orca_neighbors(world, i, cfg, env.options().noise, env.rng());
  const Vec2 u = orca_velocity(me.position, me.velocity(), me.radius, preferred_velocity(env, i, cfg.max_speed), nb, cfg,
                               world.config().dt);
  return nh_track(u, me.heading, cfg.turn_gain);
}

inline EnvOptions effective_env_options(const RunConfig& cfg) {
  EnvOptions e = cfg.env;
  e.perception = cfg.controller == ControllerKind::Policy || (!cfg.log_dir.empty() && cfg.log.needs_perception());
  return e;
}

/// Scenario for trial `trial`: seed + trial drives generation, noise and sampling.
inline Scenario trial_scenario(const RunConfig& cfg, std::size_t trial) {
  if (cfg.fixed) return *cfg.fixed;
  ScenarioSpec s = cfg.spec;
  s.rng_seed = cfg.seed + trial;
  return generate(s);
}

/// Travel-time lower bound for a route of `path_length` meters that ends within the goal tolerance.
inline double lower_bound_time(double path_length, double goal_tolerance, double max_speed) {
  return std::max(0.0, path_length - goal_tolerance) / max_speed;
}

inline EpisodeResult run_episode(const RunConfig& cfg, std::size_t trial) {
  const std::uint64_t seed = cfg.seed + trial;
  const Scenario sc = trial_scenario(cfg, trial);
  NavEnv env(sc, effective_env_options(cfg), seed * 0x9E3779B97F4A7C15ULL + 1);
  const std::size_t n = env.size();
  if (cfg.controller == ControllerKind::Policy && !cfg.policy)
    throw Error(ErrorCode::Config, "policy controller needs a checkpoint");

  EpisodeResult res;
  res.trial = trial;
  res.seed = seed;
  res.agents.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    res.agents[i].path_length = taut_length(env.grid(), sc.agents[i].start, env.path(i));
    res.agents[i].lower_bound = lower_bound_time(res.agents[i].path_length, sc.config.goal_tolerance, kMaxLinearSpeed);
  }

  std::optional<EpisodeLog> log;
  if (!cfg.log_dir.empty() && cfg.log.any()) {
    char name[64];
    std::snprintf(name, sizeof name, "trial_%04zu.jsonl", trial);
    log.emplace((std::filesystem::path(cfg.log_dir) / name).string());
    json h{{"type", "header"},
           {"trial", trial},
           {"seed", seed},
           {"controller", std::string(to_string(cfg.controller))},
           {"ablation", std::string(to_string(cfg.env.ablation))},
           {"noise", cfg.env.noise.enabled},
           {"scenario", scenario_to_json(sc)}};
    if (cfg.log.paths) {
      h["paths"] = json::array();
      for (std::size_t i = 0; i < n; ++i) {
        json p = json::array();
        for (const auto& w : env.path(i).waypoints) p.push_back(vec_json(w));
        h["paths"].push_back(p);
      }
    }
    log->write(h);
  }

  typename Policy<float>::Cache cache;
  std::vector<bool> failed(n, false);
  std::vector<Action> actions(n);
  std::mt19937_64 sample_rng(seed ^ 0x5DEECE66DULL);
  while (!env.done()) {
    json obs_log = json::array();
    for (std::size_t i = 0; i < n; ++i) {
      actions[i] = {};
      if (!env.world().robot(i).active()) continue;
      std::optional<ObservationBundle> bundle;
      if (cfg.controller == ControllerKind::Policy || (log && cfg.log.observations)) bundle = env.observation(i);
      if (log && cfg.log.observations) obs_log.push_back(observation_json(i, *bundle, cfg.log.scans));
      if (failed[i]) continue;
      try {
        switch (cfg.controller) {
          case ControllerKind::Straight: actions[i] = straight_action(env, i, cfg.orca.turn_gain); break;
          case ControllerKind::Orca: actions[i] = orca_action(env, i, cfg.orca); break;
          case ControllerKind::Policy: {
            const auto dist = cfg.policy->distribution(normalize(*bundle, cfg.env.normalization), cache);
            actions[i] = cfg.stochastic ? sample_action(dist, sample_rng).action : deterministic_action(dist).action;
            break;
          }
        }
      } catch (const Error&) {
        // A failing controller leaves the robot parked; it ends up stuck at the time limit.
        failed[i] = true;
        actions[i] = {};
      }
    }
    std::vector<Vec2> before(n);
    for (std::size_t i = 0; i < n; ++i) before[i] = env.world().robot(i).position;
    const auto step = env.step(actions);
    for (std::size_t i = 0; i < n; ++i) {
      if (!step.was_active[i]) continue;
      res.agents[i].distance += distance(before[i], env.world().robot(i).position);
      if (step.report.terminated_now[i]) {
        res.agents[i].status = step.report.status[i];
        res.agents[i].travel_time = step.report.sim_time;
      }
    }
    if (log) {
      json rec{{"type", "step"}, {"t", step.report.sim_time}};
      if (cfg.log.trajectory) rec["robots"] = robots_json(env.world());
      if (cfg.log.observations) rec["observations"] = std::move(obs_log);
      if (cfg.log.rewards) {
        rec["rewards"] = json::array();
        for (std::size_t i = 0; i < n; ++i)
          if (step.was_active[i]) rec["rewards"].push_back(reward_json(i, step.rewards[i], env.reward_target(i)));
      }
      if (cfg.log.tracks) {
        rec["tracks"] = json::array();
        for (std::size_t i = 0; i < n; ++i)
          if (env.world().robot(i).active()) rec["tracks"].push_back(tracks_json(i, env.tracks(i)));
      }
      if (cfg.log.scans && !cfg.log.observations) {
        rec["scans"] = json::array();
        for (std::size_t i = 0; i < n; ++i)
          if (env.world().robot(i).active())
            rec["scans"].push_back({{"id", i}, {"ranges", env.scans(i).latest().ranges}});
      }
      log->write(rec);
    }
  }
  res.sim_time = env.world().sim_time();
  for (const auto& a : res.agents)
    if (a.status == RobotStatus::Active) throw Error(ErrorCode::Config, "episode ended with an active robot");
  return res;
}

/// Runs `cfg.trials` seeded episodes on a worker pool; results are in trial order.
inline std::vector<EpisodeResult> run_trials(const RunConfig& cfg) {
  if (cfg.controller == ControllerKind::Policy && !cfg.policy)
    throw Error(ErrorCode::Config, "policy controller needs a checkpoint");
  if (!cfg.log_dir.empty()) std::filesystem::create_directories(cfg.log_dir);
  std::vector<EpisodeResult> results(cfg.trials);
  std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, cfg.trials);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= cfg.trials) return;
      try {
        results[t] = run_episode(cfg, t);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next = cfg.trials;
        return;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

/// Sums in trial order so the result never depends on scheduling.
inline EpisodeMetrics aggregate(const std::vector<EpisodeResult>& episodes) {
  EpisodeMetrics m;
  double travel = 0.0, bound = 0.0, speed = 0.0;
  std::size_t speed_n = 0;
  for (const auto& e : episodes) {
    for (const auto& a : e.agents) {
      ++m.robots;
      switch (a.status) {
        case RobotStatus::ReachedGoal:
          ++m.successes;
          travel += a.travel_time;
          bound += a.lower_bound;
          break;
        case RobotStatus::Collided: ++m.collisions; break;
        case RobotStatus::Stuck: ++m.stuck; break;
        case RobotStatus::Active: throw Error(ErrorCode::Config, "episode result has an unfinished robot");
      }
      if (a.travel_time > 0.0) {
        speed += a.distance / a.travel_time;
        ++speed_n;
      }
    }
  }
  if (m.successes + m.collisions + m.stuck != m.robots) throw Error(ErrorCode::Config, "outcomes not exhaustive");
  if (m.robots == 0) return m;
  const double n = static_cast<double>(m.robots);
  m.success_rate = static_cast<double>(m.successes) / n;
  m.collision_rate = static_cast<double>(m.collisions) / n;
  m.stuck_rate = static_cast<double>(m.stuck) / n;
  if (m.successes > 0) {
    const double k = static_cast<double>(m.successes);
    m.extra_time = travel / k - bound / k;
    m.extra_time_ratio = bound > 0.0 ? (travel - bound) / bound : std::nan("");
  }
  if (speed_n > 0) m.average_speed = speed / static_cast<double>(speed_n);
  return m;
}

/// One labelled metrics row of a report.
struct ReportRow {
  std::string scenario;
  std::size_t agents = 0;
  std::string controller;
  std::string ablation = "none";
  bool noise = false;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  EpisodeMetrics metrics;
};

inline std::string csv_header() {
  return "scenario,agents,controller,ablation,noise,trials,seed,robots,success_rate,collision_rate,stuck_rate,"
         "extra_time_s,extra_time_ratio,average_speed\n";
}

inline std::string fmt_fixed(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

inline std::string csv_row(const ReportRow& r) {
  std::ostringstream o;
  const auto& m = r.metrics;
  o << r.scenario << "," << r.agents << "," << r.controller << "," << r.ablation << "," << (r.noise ? "on" : "off")
    << "," << r.trials << "," << r.seed << "," << m.robots << "," << fmt_fixed(m.success_rate) << ","
    << fmt_fixed(m.collision_rate) << "," << fmt_fixed(m.stuck_rate) << "," << fmt_fixed(m.extra_time) << ","
    << fmt_fixed(m.extra_time_ratio) << "," << fmt_fixed(m.average_speed) << "\n";
  return o.str();
}

inline std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = csv_header();
  for (const auto& r : rows) out += csv_row(r);
  return out;
}

inline std::string episodes_csv(const std::vector<EpisodeResult>& episodes) {
  std::ostringstream o;
  o << "trial,seed,agent,status,travel_time,distance,path_length,lower_bound\n";
  for (const auto& e : episodes)
    for (std::size_t i = 0; i < e.agents.size(); ++i) {
      const auto& a = e.agents[i];
      o << e.trial << "," << e.seed << "," << i << "," << to_string(a.status) << "," << fmt_fixed(a.travel_time) << ","
        << fmt_fixed(a.distance) << "," << fmt_fixed(a.path_length) << "," << fmt_fixed(a.lower_bound) << "\n";
    }
  return o.str();
}

/// Methods as rows within each metric block, scenario/agent-count pairs as columns.
inline std::string comparison_table(const std::vector<ReportRow>& rows) {
  std::vector<std::pair<std::string, std::size_t>> cols;
  std::vector<std::string> methods;
  std::map<std::tuple<std::string, std::string, std::size_t>, EpisodeMetrics> cell;
  for (const auto& r : rows) {
    const std::string method = r.ablation == "none" ? r.controller : r.controller + "/" + r.ablation;
    const auto col = std::make_pair(r.scenario, r.agents);
    if (std::find(cols.begin(), cols.end(), col) == cols.end()) cols.push_back(col);
    if (std::find(methods.begin(), methods.end(), method) == methods.end()) methods.push_back(method);
    cell[{method, r.scenario, r.agents}] = r.metrics;
  }
  std::ostringstream o;
  o << "| Metric | Method |";
  for (const auto& [s, a] : cols) o << " " << s << " " << a << " |";
  o << "\n|---|---|";
  for (std::size_t k = 0; k < cols.size(); ++k) o << "---|";
  o << "\n";
  struct Block {
    const char* name;
    std::string (*fmt)(const EpisodeMetrics&);
  };
  const Block blocks[] = {
      {"Success Rate (%)", [](const EpisodeMetrics& m) { return fmt_fixed(100.0 * m.success_rate, 2); }},
      {"Stuck/Collision Rate (%)",
       [](const EpisodeMetrics& m) {
         return fmt_fixed(100.0 * m.stuck_rate, 2) + " / " + fmt_fixed(100.0 * m.collision_rate, 2);
       }},
      {"Extra Time (ratio, %)", [](const EpisodeMetrics& m) { return fmt_fixed(100.0 * m.extra_time_ratio, 2); }},
      {"Extra Time (s)", [](const EpisodeMetrics& m) { return fmt_fixed(m.extra_time, 2); }},
      {"Average Speed (m/s)", [](const EpisodeMetrics& m) { return fmt_fixed(m.average_speed, 2); }},
  };
  for (const auto& b : blocks) {
    for (const auto& method : methods) {
      o << "| " << b.name << " | " << method << " |";
      for (const auto& [s, a] : cols) {
        auto it = cell.find({method, s, a});
        o << " " << (it == cell.end() ? std::string("-") : b.fmt(it->second)) << " |";
      }
      o << "\n";
    }
  }
  return o.str();
}

/// Metrics as rows, ablation variants as columns.
inline std::string ablation_table(const std::vector<ReportRow>& rows) {
  std::ostringstream o;
  o << "| Metric |";
  for (const auto& r : rows) o << " " << r.ablation << " |";
  o << "\n|---|";
  for (std::size_t k = 0; k < rows.size(); ++k) o << "---|";
  o << "\n| Success Rate (%) |";
  for (const auto& r : rows) o << " " << fmt_fixed(100.0 * r.metrics.success_rate, 1) << " |";
  o << "\n| Stuck / Collision Rate (%) |";
  for (const auto& r : rows)
    o << " " << fmt_fixed(100.0 * r.metrics.stuck_rate, 1) << " / " << fmt_fixed(100.0 * r.metrics.collision_rate, 1)
      << " |";
  o << "\n| Extra Time (Normalized, %) |";
  for (const auto& r : rows) o << " " << fmt_fixed(100.0 * r.metrics.extra_time_ratio, 1) << " |";
  o << "\n| Average Speed (m/s) |";
  for (const auto& r : rows) o << " " << fmt_fixed(r.metrics.average_speed, 2) << " |";
  o << "\n";
  return o.str();
}

}  // namespace gpnav
