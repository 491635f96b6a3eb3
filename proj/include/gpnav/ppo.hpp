#pragma once

// Generalized advantage estimation, rollout storage, Adam and the clipped PPO update.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "gpnav/error.hpp"
#include "gpnav/obs.hpp"
#include "gpnav/policy.hpp"

namespace gpnav {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// `values[t]` is V(s_t); `bootstrap` is V(s_T) after the last step, ignored when that step is done.
inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                             std::span<const std::uint8_t> dones, double bootstrap, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw Error(ErrorCode::Config, "GAE streams differ in length");
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = bootstrap;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    r.advantages[k] = next_adv;
    r.returns[k] = next_adv + values[k];
    next_value = values[k];
  }
  return r;
}

struct Transition {
  NormalizedObservation obs;
  std::array<double, 2> raw_action{};
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  std::uint8_t done = 0;
};

/// Transitions of one (environment, agent) pair in time order. Several episodes may follow
/// each other; `done` marks their ends.
struct AgentStream {
  std::vector<Transition> steps;
  /// V(s_T) for a stream whose last transition is not terminal.
  double bootstrap = 0.0;
};

struct RolloutBuffer {
  std::vector<AgentStream> streams;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& s : streams) n += s.steps.size();
    return n;
  }

  /// Flattened index order: streams in order, time within each.
  const Transition& at(std::size_t flat) const {
    for (const auto& s : streams) {
      if (flat < s.steps.size()) return s.steps[flat];
      flat -= s.steps.size();
    }
    throw Error(ErrorCode::Config, "rollout index out of range");
  }

  void compute_advantages(double gamma, double lambda) {
    advantages.clear();
    returns.clear();
    for (const auto& s : streams) {
      std::vector<double> r, v;
      std::vector<std::uint8_t> d;
      for (const auto& t : s.steps) {
        r.push_back(t.reward);
        v.push_back(t.value);
        d.push_back(t.done);
      }
      const auto g = compute_gae(r, v, d, s.bootstrap, gamma, lambda);
      advantages.insert(advantages.end(), g.advantages.begin(), g.advantages.end());
      returns.insert(returns.end(), g.returns.begin(), g.returns.end());
    }
  }

  /// Zero mean, unit standard deviation over the whole batch.
  void normalize_advantages() {
    if (advantages.size() < 2) return;
    const double n = static_cast<double>(advantages.size());
    const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
    double var = 0.0;
    for (double a : advantages) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / n);
    for (double& a : advantages) a = (a - mean) / (sd + 1e-8);
  }
};

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m, v;
  long t = 0;

  template <class T>
  void step(std::vector<T>& params, const std::vector<double>& grad) {
    if (m.size() != params.size()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      params[i] = static_cast<T>(static_cast<double>(params[i]) - update);
    }
  }
};

struct PpoConfig {
  double lr_critic = 4e-4;
  double lr_actor = 2e-5;
  double entropy_coef = 0.0;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int ppo_epochs = 10;
  double clip = 0.2;
  std::size_t minibatch_size = 256;
  /// Global gradient-norm clip per network; <= 0 disables it.
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
  /// Worker threads for gradient evaluation (0: hardware concurrency).
  std::size_t threads = 0;
};

inline void validate(const PpoConfig& c) {
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw Error(ErrorCode::Config, "gamma must be in (0, 1]");
  if (!(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0)) throw Error(ErrorCode::Config, "gae_lambda must be in [0, 1]");
  if (!(c.clip > 0.0)) throw Error(ErrorCode::Config, "clip must be positive");
  if (c.ppo_epochs < 1 || c.minibatch_size < 1) throw Error(ErrorCode::Config, "epochs and minibatch size must be >= 1");
  if (c.lr_actor < 0.0 || c.lr_critic < 0.0) throw Error(ErrorCode::Config, "learning rates must be non-negative");
}

/// Per-sample clipped surrogate min(r A, clip(r) A).
inline double clipped_objective(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

/// d objective / d log pi: zero whenever the clipped branch is the active minimum.
inline double clipped_objective_grad(double ratio, double advantage, double clip) {
  const double unclipped = ratio * advantage;
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage;
  return unclipped <= clipped ? unclipped : 0.0;
}

struct UpdateReport {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  std::size_t minibatches = 0;
};

struct PpoOptimizer {
  Adam actor;
  Adam critic;
};

namespace detail {

/// Splits [0, n) into `parts` contiguous chunks and runs f(chunk_index, begin, end) on a
/// small thread pool. Chunking depends only on n and parts, never on the thread count.
template <class F>
void parallel_chunks(std::size_t n, std::size_t parts, std::size_t threads, F&& f) {
  parts = std::max<std::size_t>(1, std::min(parts, n));
  auto run = [&](std::size_t c) {
    const std::size_t b = n * c / parts;
    const std::size_t e = n * (c + 1) / parts;
    f(c, b, e);
  };
  threads = std::min(threads ? threads : std::max(1u, std::thread::hardware_concurrency()), parts);
  if (threads <= 1) {
    for (std::size_t c = 0; c < parts; ++c) run(c);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t k = 0; k < threads; ++k)
    pool.emplace_back([&, k] {
      try {
        for (std::size_t c = k; c < parts; c += threads) run(c);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline double clip_grad_norm(std::vector<double>& g, double max_norm) {
  double sq = 0.0;
  for (double x : g) sq += x * x;
  const double n = std::sqrt(sq);
  if (max_norm > 0.0 && n > max_norm) {
    const double s = max_norm / (n + 1e-12);
    for (double& x : g) x *= s;
  }
  return n;
}

}  // namespace detail

inline constexpr std::size_t kGradChunks = 8;

/// Clipped-surrogate actor update and squared-error critic update over shuffled minibatches.
/// On a non-finite loss or gradient the parameters and optimizer state are restored and
/// NumericalDivergence is thrown.
template <class T>
UpdateReport ppo_update(Policy<T>& policy, PpoOptimizer& opt, RolloutBuffer& buf, const PpoConfig& cfg,
                        std::mt19937_64& rng) {
  validate(cfg);
  const std::size_t n = buf.size();
  if (buf.advantages.size() != n) throw Error(ErrorCode::Config, "advantages not computed for this rollout");
  UpdateReport rep;
  if (n == 0) return rep;

  const auto saved_actor = policy.actor().params;
  const auto saved_critic = policy.critic().params;
  const PpoOptimizer saved_opt = opt;
  auto diverged = [&](const char* what) {
    policy.actor().params = saved_actor;
    policy.critic().params = saved_critic;
    opt = saved_opt;
    throw Error(ErrorCode::NumericalDivergence, std::string("PPO update diverged: ") + what);
  };

  std::vector<const Transition*> flat;
  flat.reserve(n);
  for (const auto& s : buf.streams)
    for (const auto& t : s.steps) flat.push_back(&t);

  opt.actor.lr = cfg.lr_actor;
  opt.critic.lr = cfg.lr_critic;
  const std::size_t pa = policy.actor().parameter_count();
  const std::size_t pc = policy.critic().parameter_count();

  struct ChunkOut {
    std::vector<T> ga, gc;
    double actor_obj = 0.0, critic_sq = 0.0, entropy = 0.0, kl = 0.0;
    std::size_t clipped = 0;
    bool failed = false;
  };
  std::vector<ChunkOut> chunks(kGradChunks);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double sum_actor = 0.0, sum_critic = 0.0, sum_ent = 0.0, sum_kl = 0.0, sum_clip = 0.0;
  std::size_t sum_n = 0;
  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.minibatch_size) {
      const std::size_t end = std::min(n, start + cfg.minibatch_size);
      const std::size_t B = end - start;
      const double invB = 1.0 / static_cast<double>(B);
      detail::parallel_chunks(B, kGradChunks, cfg.threads, [&](std::size_t c, std::size_t b, std::size_t e) {
        ChunkOut& out = chunks[c];
        out.ga.assign(pa, T(0));
        out.gc.assign(pc, T(0));
        out.actor_obj = out.critic_sq = out.entropy = out.kl = 0.0;
        out.clipped = 0;
        out.failed = false;
        typename Policy<T>::Cache cache;
        // exceptions must not escape a worker thread
        try {
          for (std::size_t k = b; k < e; ++k) {
            const std::size_t idx = order[start + k];
            const Transition& tr = *flat[idx];
            const double adv = buf.advantages[idx];
            const T* aout = policy.actor().forward(tr.obs, cache.actor);
            const ActionDistribution dist = policy.distribution_from(aout);
            const double logp = log_prob(dist, tr.raw_action);
            const double ratio = std::exp(logp - tr.log_prob);
            out.actor_obj += clipped_objective(ratio, adv, cfg.clip);
            out.entropy += entropy(dist);
            out.kl += tr.log_prob - logp;
            if (std::abs(ratio - 1.0) > cfg.clip) ++out.clipped;
            std::array<double, 4> dlogp{}, dent{};
            policy.actor_output_grads(aout, tr.raw_action, dlogp, dent);
            const double g_obj = clipped_objective_grad(ratio, adv, cfg.clip);
            std::array<T, 4> dout{};
            for (int q = 0; q < 4; ++q) {
              double d = -g_obj * dlogp[q] * invB;
              if (cfg.entropy_coef != 0.0) d -= cfg.entropy_coef * dent[q] * invB;
              dout[q] = static_cast<T>(d);
            }
            policy.actor().backward(cache.actor, dout.data(), out.ga.data());

            const T* vout = policy.critic().forward(tr.obs, cache.critic);
            const double err = static_cast<double>(vout[0]) - buf.returns[idx];
            out.critic_sq += err * err;
            const T dv = static_cast<T>(2.0 * err * invB);
            policy.critic().backward(cache.critic, &dv, out.gc.data());
          }
        } catch (const Error&) {
          out.failed = true;
        }
      });
      for (const auto& c : chunks)
        if (c.failed) diverged("non-finite network output");
      std::vector<double> ga(pa, 0.0), gc(pc, 0.0);
      double obj = 0.0, sq = 0.0, ent = 0.0, kl = 0.0;
      std::size_t clipped = 0;
      for (const auto& c : chunks) {
        if (c.ga.empty()) continue;
        for (std::size_t i = 0; i < pa; ++i) ga[i] += static_cast<double>(c.ga[i]);
        for (std::size_t i = 0; i < pc; ++i) gc[i] += static_cast<double>(c.gc[i]);
        obj += c.actor_obj;
        sq += c.critic_sq;
        ent += c.entropy;
        kl += c.kl;
        clipped += c.clipped;
      }
      for (auto& c : chunks) c.ga.clear();
      const double actor_loss = -obj * invB - cfg.entropy_coef * ent * invB;
      const double critic_loss = sq * invB;
      if (!std::isfinite(actor_loss) || !std::isfinite(critic_loss)) diverged("non-finite loss");
      const double na = detail::clip_grad_norm(ga, cfg.max_grad_norm);
      const double nc = detail::clip_grad_norm(gc, cfg.max_grad_norm);
      if (!std::isfinite(na) || !std::isfinite(nc)) diverged("non-finite gradient");
      opt.actor.step(policy.actor().params, ga);
      opt.critic.step(policy.critic().params, gc);
      sum_actor += actor_loss;
      sum_critic += critic_loss;
      sum_ent += ent * invB;
      sum_kl += kl * invB;
      sum_clip += static_cast<double>(clipped) * invB;
      ++sum_n;
    }
  }
  for (const T p : policy.actor().params)
    if (!std::isfinite(p)) diverged("non-finite actor parameters");
  for (const T p : policy.critic().params)
    if (!std::isfinite(p)) diverged("non-finite critic parameters");
  const double k = static_cast<double>(sum_n);
  rep.actor_loss = sum_actor / k;
  rep.critic_loss = sum_critic / k;
  rep.entropy = sum_ent / k;
  rep.approx_kl = sum_kl / k;
  rep.clip_fraction = sum_clip / k;
  rep.minibatches = sum_n;
  return rep;
}

}  // namespace gpnav
