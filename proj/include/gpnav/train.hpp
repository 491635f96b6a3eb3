#pragma once

// PPO training loop: parallel rollouts over scenario tasks, periodic deterministic
// evaluation, CSV progress log and checkpoints.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gpnav/env.hpp"
#include "gpnav/error.hpp"
#include "gpnav/io.hpp"
#include "gpnav/policy.hpp"
#include "gpnav/ppo.hpp"
#include "gpnav/scenarios.hpp"

namespace gpnav {

/// Either a generated scenario family or one fixed layout; start headings get uniform jitter.
struct TrainTask {
  std::optional<ScenarioSpec> spec;
  std::optional<Scenario> fixed;
  double heading_jitter = 0.0;
};

/// One robot in an empty 5 x 5 m world with its goal 3 m ahead.
inline TrainTask smoke_task(double heading_jitter = 0.5) {
  Scenario s;
  s.name = "smoke";
  s.config.bounds = {{0.0, 0.0}, {5.0, 5.0}};
  s.config.max_episode_time = 20.0;
  s.agents.push_back({{1.0, 2.5}, 0.0, {4.0, 2.5}});
  TrainTask t;
  t.fixed = s;
  t.heading_jitter = heading_jitter;
  return t;
}

struct TrainConfig {
  PpoConfig ppo;
  PolicyConfig policy;
  EnvOptions env;
  std::vector<TrainTask> tasks;
  /// World steps per environment per update.
  std::size_t rollout_length = 512;
  std::size_t num_envs = 8;
  /// Budget in agent transitions.
  std::size_t total_steps = 300000;
  /// Evaluate every this many updates (0: only at the end).
  std::size_t eval_interval = 5;
  std::size_t eval_episodes = 20;
  /// Stop as soon as an evaluation reaches this success rate; <= 0 disables early stopping.
  double target_success = 0.0;
  std::size_t checkpoint_interval = 10;
  std::string out_dir;
  std::uint64_t seed = 1;
};

inline void validate(const TrainConfig& c) {
  validate(c.ppo);
  if (c.tasks.empty()) throw Error(ErrorCode::Config, "training needs at least one task");
  for (const auto& t : c.tasks)
    if (!t.spec && !t.fixed) throw Error(ErrorCode::Config, "training task has neither a scenario spec nor a layout");
  if (c.rollout_length == 0 || c.num_envs == 0) throw Error(ErrorCode::Config, "rollout length and env count must be >= 1");
}

inline TrainTask task_from_json(const json& j) {
  TrainTask t;
  t.heading_jitter = j.value("heading_jitter", 0.0);
  if (j.value("preset", "") == "smoke") {
    t = smoke_task(j.value("heading_jitter", 0.5));
  } else if (j.contains("layout")) {
    t.fixed = scenario_from_json(j.at("layout"));
  } else {
    ScenarioSpec s;
    s.kind = parse_scenario_kind(j.at("scenario").get<std::string>());
    s.num_agents = j.value("agents", s.num_agents);
    s.scale = j.value("scale", s.scale);
    s.num_obstacles = j.value("obstacles", s.num_obstacles);
    s.num_walls = j.value("walls", s.num_walls);
    s.max_episode_time = j.value("max_episode_time", s.max_episode_time);
    t.spec = s;
  }
  return t;
}

inline EnvOptions env_options_from_json(const json& j, EnvOptions e = {}) {
  e.horizon = j.value("horizon", e.horizon);
  e.noise.enabled = j.value("noise", e.noise.enabled);
  if (j.contains("ablation")) e.ablation = parse_ablation(j.at("ablation").get<std::string>());
  return e;
}

inline TrainConfig train_config_from_json(const json& j) {
  try {
    TrainConfig c;
    auto& p = c.ppo;
    p.lr_actor = j.value("lr_actor", p.lr_actor);
    p.lr_critic = j.value("lr_critic", p.lr_critic);
    p.entropy_coef = j.value("entropy_coef", p.entropy_coef);
    p.gamma = j.value("gamma", p.gamma);
    p.gae_lambda = j.value("gae_lambda", p.gae_lambda);
    p.ppo_epochs = j.value("ppo_epochs", p.ppo_epochs);
    p.clip = j.value("clip", p.clip);
    p.minibatch_size = j.value("minibatch_size", p.minibatch_size);
    p.max_grad_norm = j.value("max_grad_norm", p.max_grad_norm);
    p.normalize_advantages = j.value("normalize_advantages", p.normalize_advantages);
    p.threads = j.value("threads", p.threads);
    if (j.contains("network")) c.policy.network = j.at("network").get<NetworkConfig>();
    c.policy.init_std = j.value("init_std", c.policy.init_std);
    c.policy.init_mean_v = j.value("init_mean_v", c.policy.init_mean_v);
    c.env = env_options_from_json(j.value("env", json::object()));
    for (const auto& t : j.at("tasks")) c.tasks.push_back(task_from_json(t));
    c.rollout_length = j.value("rollout_length", c.rollout_length);
    c.num_envs = j.value("num_parallel_envs", c.num_envs);
    c.total_steps = j.value("total_env_steps", c.total_steps);
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
    c.target_success = j.value("target_success", c.target_success);
    c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    c.policy.seed = c.seed;
    validate(c);
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("bad training config: ") + e.what());
  }
}

/// Scenario for a task; `seed` drives both generation and heading jitter.
inline Scenario task_scenario(const TrainTask& task, std::uint64_t seed) {
  Scenario s;
  if (task.fixed) {
    s = *task.fixed;
  } else {
    ScenarioSpec spec = *task.spec;
    spec.rng_seed = seed;
    s = generate(spec);
  }
  if (task.heading_jitter > 0.0) {
    std::mt19937_64 rng(seed ^ 0xA5A5A5A5ULL);
    std::uniform_real_distribution<double> u(-task.heading_jitter, task.heading_jitter);
    for (auto& a : s.agents) a.heading = wrap_angle(a.heading + u(rng));
  }
  return s;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Deterministic-policy success rate over `episodes` evaluation episodes (tasks in turn).
template <class T>
double evaluate_policy(const Policy<T>& policy, const TrainConfig& cfg, std::size_t episodes) {
  std::vector<std::size_t> reached(episodes, 0), total(episodes, 0);
  detail::parallel_chunks(episodes, episodes, cfg.ppo.threads, [&](std::size_t, std::size_t b, std::size_t e) {
    typename Policy<T>::Cache cache;
    for (std::size_t k = b; k < e; ++k) {
      const std::uint64_t s = mix_seed(cfg.seed + 7777, k);
      NavEnv env(task_scenario(cfg.tasks[k % cfg.tasks.size()], s), cfg.env, s + 1);
      std::vector<Action> act(env.size());
      while (!env.done()) {
        for (std::size_t i = 0; i < env.size(); ++i) {
          act[i] = {};
          if (!env.world().robot(i).active()) continue;
          act[i] = deterministic_action(policy.distribution(env.normalized_observation(i), cache)).action;
        }
        env.step(act);
      }
      total[k] = env.size();
      for (std::size_t i = 0; i < env.size(); ++i) reached[k] += env.world().robot(i).status == RobotStatus::ReachedGoal;
    }
  });
  std::size_t r = 0, n = 0;
  for (std::size_t k = 0; k < episodes; ++k) {
    r += reached[k];
    n += total[k];
  }
  return n ? static_cast<double>(r) / static_cast<double>(n) : 0.0;
}

struct TrainRow {
  std::size_t update = 0;
  std::size_t env_steps = 0;
  std::size_t episodes = 0;
  double mean_return = std::nan("");
  double train_success = std::nan("");
  double eval_success = std::nan("");
  UpdateReport ppo;
};

inline std::string train_csv_header() {
  return "update,env_steps,episodes,mean_return,train_success,eval_success,actor_loss,critic_loss,entropy,approx_kl,"
         "clip_fraction";
}

inline std::string train_csv_row(const TrainRow& r) {
  auto f = [](double v) {
    if (std::isnan(v)) return std::string("nan");
    char b[48];
    std::snprintf(b, sizeof b, "%.6g", v);
    return std::string(b);
  };
  return std::to_string(r.update) + "," + std::to_string(r.env_steps) + "," + std::to_string(r.episodes) + "," +
         f(r.mean_return) + "," + f(r.train_success) + "," + f(r.eval_success) + "," + f(r.ppo.actor_loss) + "," +
         f(r.ppo.critic_loss) + "," + f(r.ppo.entropy) + "," + f(r.ppo.approx_kl) + "," + f(r.ppo.clip_fraction);
}

struct TrainResult {
  std::vector<TrainRow> rows;
  std::size_t env_steps = 0;
  double final_eval_success = 0.0;
  bool reached_target = false;
};

namespace detail {

template <class T>
struct EnvSlot {
  std::unique_ptr<NavEnv> env;
  std::mt19937_64 rng;
  std::size_t episode = 0;
  std::vector<AgentStream> streams;
  std::vector<double> running_return;
  // per finished agent-episode
  std::vector<double> returns;
  std::size_t successes = 0;
};

template <class T>
void reset_slot(EnvSlot<T>& s, const TrainConfig& cfg, std::size_t index) {
  const std::uint64_t seed = mix_seed(mix_seed(cfg.seed, index), s.episode);
  const auto& task = cfg.tasks[std::uniform_int_distribution<std::size_t>(0, cfg.tasks.size() - 1)(s.rng)];
  s.env = std::make_unique<NavEnv>(task_scenario(task, seed), cfg.env, seed + 1);
  ++s.episode;
  if (s.streams.size() < s.env->size()) s.streams.resize(s.env->size());
  s.running_return.assign(s.env->size(), 0.0);
}

template <class T>
void collect(EnvSlot<T>& s, const Policy<T>& policy, const TrainConfig& cfg, std::size_t index) {
  typename Policy<T>::Cache cache;
  for (auto& st : s.streams) {
    st.steps.clear();
    st.bootstrap = 0.0;
  }
  s.returns.clear();
  s.successes = 0;
  std::vector<Action> act;
  std::vector<std::size_t> pending;
  for (std::size_t t = 0; t < cfg.rollout_length; ++t) {
    if (!s.env || s.env->done()) reset_slot(s, cfg, index);
    NavEnv& env = *s.env;
    act.assign(env.size(), Action{});
    pending.clear();
    for (std::size_t i = 0; i < env.size(); ++i) {
      if (!env.world().robot(i).active()) continue;
      Transition tr;
      tr.obs = env.normalized_observation(i);
      const auto dist = policy.distribution(tr.obs, cache);
      const auto a = sample_action(dist, s.rng);
      tr.raw_action = a.raw;
      tr.log_prob = a.log_prob;
      tr.value = policy.value(tr.obs, cache);
      act[i] = a.action;
      s.streams[i].steps.push_back(std::move(tr));
      pending.push_back(i);
    }
    const auto res = env.step(act);
    for (std::size_t i : pending) {
      auto& tr = s.streams[i].steps.back();
      tr.reward = res.rewards[i].total;
      tr.done = res.report.terminated_now[i] ? 1 : 0;
      s.running_return[i] += tr.reward;
      if (tr.done) {
        s.returns.push_back(s.running_return[i]);
        s.successes += env.world().robot(i).status == RobotStatus::ReachedGoal;
      }
    }
  }
  if (s.env && !s.env->done())
    for (std::size_t i = 0; i < s.env->size(); ++i) {
      auto& st = s.streams[i];
      if (st.steps.empty() || st.steps.back().done) continue;
      st.bootstrap = policy.value(s.env->normalized_observation(i), cache);
    }
}

}  // namespace detail

/// Runs PPO until the step budget is spent or an evaluation reaches `target_success`.
/// `progress` (optional) receives every row as it is produced.
template <class T>
TrainResult train(Policy<T>& policy, const TrainConfig& cfg, const std::function<void(const TrainRow&)>& progress = {}) {
  validate(cfg);
  TrainResult result;
  std::optional<std::ofstream> csv;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    csv.emplace(std::filesystem::path(cfg.out_dir) / "train_log.csv");
    if (!*csv) throw Error(ErrorCode::Io, "cannot write training log in " + cfg.out_dir);
    *csv << train_csv_header() << "\n";
  }
  auto checkpoint = [&](const std::string& name) {
    if (!cfg.out_dir.empty()) save_policy(policy, (std::filesystem::path(cfg.out_dir) / name).string());
  };

  std::vector<detail::EnvSlot<T>> slots(cfg.num_envs);
  for (std::size_t e = 0; e < cfg.num_envs; ++e) slots[e].rng.seed(mix_seed(cfg.seed, 1000 + e));
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 99));
  PpoOptimizer opt;

  for (std::size_t update = 1; result.env_steps < cfg.total_steps; ++update) {
    detail::parallel_chunks(cfg.num_envs, cfg.num_envs, cfg.ppo.threads,
                            [&](std::size_t, std::size_t b, std::size_t e) {
                              for (std::size_t k = b; k < e; ++k) detail::collect(slots[k], policy, cfg, k);
                            });
    RolloutBuffer buf;
    TrainRow row;
    row.update = update;
    double ret = 0.0;
    std::size_t succ = 0;
    for (auto& s : slots) {
      for (auto& st : s.streams)
        if (!st.steps.empty()) buf.streams.push_back(std::move(st));
      for (double r : s.returns) ret += r;
      row.episodes += s.returns.size();
      succ += s.successes;
    }
    if (row.episodes) {
      row.mean_return = ret / static_cast<double>(row.episodes);
      row.train_success = static_cast<double>(succ) / static_cast<double>(row.episodes);
    }
    result.env_steps += buf.size();
    row.env_steps = result.env_steps;
    buf.compute_advantages(cfg.ppo.gamma, cfg.ppo.gae_lambda);
    if (cfg.ppo.normalize_advantages) buf.normalize_advantages();
    try {
      row.ppo = ppo_update(policy, opt, buf, cfg.ppo, shuffle_rng);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NumericalDivergence) checkpoint("checkpoint_last_good.json");
      throw;
    }
    const bool last = result.env_steps >= cfg.total_steps;
    if ((cfg.eval_interval && update % cfg.eval_interval == 0) || last) {
      row.eval_success = evaluate_policy(policy, cfg, cfg.eval_episodes);
      result.final_eval_success = row.eval_success;
    }
    if (cfg.checkpoint_interval && update % cfg.checkpoint_interval == 0) checkpoint("checkpoint_latest.json");
    if (csv) *csv << train_csv_row(row) << std::endl;
    result.rows.push_back(row);
    if (progress) progress(row);
    if (cfg.target_success > 0.0 && !std::isnan(row.eval_success) && row.eval_success >= cfg.target_success) {
      result.reached_target = true;
      break;
    }
  }
  checkpoint("policy_final.json");
  return result;
}

}  // namespace gpnav
