#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gpnav/train.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace gpnav;

namespace {

GaeResult gae(const std::vector<double>& r, const std::vector<double>& v, const std::vector<std::uint8_t>& d,
              double boot, double gamma, double lambda) {
  return compute_gae(r, v, d, boot, gamma, lambda);
}

PolicyConfig reduced(std::uint64_t seed = 3) {
  PolicyConfig c;
  c.network = oracle::reduced_network();
  c.seed = seed;
  return c;
}

// A small batch of transitions generated by the policy itself.
RolloutBuffer sampled_buffer(const Policy<double>& pol, std::size_t streams, std::size_t len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  RolloutBuffer buf;
  Policy<double>::Cache c;
  for (std::size_t s = 0; s < streams; ++s) {
    AgentStream st;
    for (std::size_t t = 0; t < len; ++t) {
      Transition tr;
      tr.obs = oracle::random_observation(rng, t % 3);
      const auto d = pol.distribution(tr.obs, c);
      const auto a = sample_action(d, rng);
      tr.raw_action = a.raw;
      tr.log_prob = a.log_prob;
      tr.value = pol.value(tr.obs, c);
      tr.reward = n(rng);
      tr.done = t + 1 == len;
      st.steps.push_back(tr);
    }
    buf.streams.push_back(st);
  }
  buf.compute_advantages(0.99, 0.95);
  buf.normalize_advantages();
  return buf;
}

TrainConfig tiny_train(std::uint64_t seed) {
  TrainConfig c;
  c.policy = reduced(seed);
  c.tasks = {smoke_task()};
  c.rollout_length = 24;
  c.num_envs = 2;
  c.total_steps = 96;
  c.eval_interval = 1;
  c.eval_episodes = 2;
  c.checkpoint_interval = 0;
  c.ppo.minibatch_size = 16;
  c.ppo.ppo_epochs = 2;
  c.ppo.threads = 2;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Gae, Examples) {
  auto r = gae({1.0}, {0.0}, {1}, 0.0, 0.99, 0.95);
  EXPECT_EQ(r.advantages[0], 1.0);
  r = gae({1.0, 1.0}, {0.0, 0.0}, {0, 1}, 0.0, 0.99, 0.95);
  EXPECT_NEAR(r.advantages[1], 1.0, 1e-15);
  EXPECT_NEAR(r.advantages[0], 1.9405, 1e-12);
  r = gae({0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 1, 0}, 0.0, 0.99, 0.95);
  for (double a : r.advantages) EXPECT_EQ(a, 0.0);
  EXPECT_THROW(gae({1.0}, {0.0, 1.0}, {1}, 0.0, 0.99, 0.95), Error);
}

TEST(Gae, LambdaOneIsMonteCarlo) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::bernoulli_distribution done(0.1);
  for (int s = 0; s < 100; ++s) {
    const std::size_t len = 1 + s % 60;
    std::vector<double> r(len), v(len);
    std::vector<std::uint8_t> d(len);
    for (std::size_t t = 0; t < len; ++t) {
      r[t] = n(rng);
      v[t] = n(rng);
      d[t] = done(rng);
    }
    const double boot = n(rng);
    const auto g = gae(r, v, d, boot, 0.99, 1.0);
    const auto mc = oracle::mc_returns(r, d, boot, 0.99);
    for (std::size_t t = 0; t < len; ++t) {
      EXPECT_NEAR(g.advantages[t], mc[t] - v[t], 1e-10);
      EXPECT_NEAR(g.returns[t], mc[t], 1e-10);
    }
  }
}

TEST(Gae, LambdaZeroIsTdError) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::bernoulli_distribution done(0.2);
  const std::size_t len = 200;
  std::vector<double> r(len), v(len);
  std::vector<std::uint8_t> d(len);
  for (std::size_t t = 0; t < len; ++t) {
    r[t] = n(rng);
    v[t] = n(rng);
    d[t] = done(rng);
  }
  const double boot = n(rng);
  const auto g = gae(r, v, d, boot, 0.97, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    const double next = t + 1 < len ? v[t + 1] : boot;
    const double td = r[t] + (d[t] ? 0.0 : 0.97 * next) - v[t];
    EXPECT_EQ(g.advantages[t], td);
  }
}

TEST(Gae, EpisodeBoundaryIsolation) {
  std::vector<double> r{0.5, -0.2, 1.0, 0.3, 0.0}, v{0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<std::uint8_t> d{0, 0, 1, 0, 0};
  const auto a = gae(r, v, d, 0.7, 0.99, 0.95);
  r[3] = 1e6;
  r[4] = -1e6;
  const auto b = gae(r, v, d, 1e6, 0.99, 0.95);
  for (std::size_t t = 0; t <= 2; ++t) EXPECT_EQ(a.advantages[t], b.advantages[t]);
}

TEST(ClippedObjective, ClipExample) {
  EXPECT_NEAR(clipped_objective(1.5, 1.0, 0.2), 1.2, 1e-15);
  EXPECT_NEAR(clipped_objective(0.5, -1.0, 0.2), -0.8, 1e-15);
  EXPECT_NEAR(clipped_objective(1.1, 2.0, 0.2), 2.2, 1e-15);
}

TEST(ClippedObjective, GradientMatchesFiniteDifferenceAndVanishesOutward) {
  // derivative with respect to log pi, via ratio = exp(log pi - log pi_old)
  for (double adv : {-1.3, -0.2, 0.4, 2.0})
    for (double lr = -0.6; lr <= 0.6; lr += 0.037) {
      const double r = std::exp(lr);
      std::vector<double> x{lr};
      const double fd =
          oracle::central_diff([&] { return clipped_objective(std::exp(x[0]), adv, 0.2); }, x, 0, 1e-7);
      EXPECT_NEAR(clipped_objective_grad(r, adv, 0.2), fd, 1e-5) << adv << " " << r;
      const bool outward = (adv > 0 && r > 1.2) || (adv < 0 && r < 0.8);
      if (outward) {
        EXPECT_EQ(clipped_objective_grad(r, adv, 0.2), 0.0);
      }
    }
}

TEST(PpoUpdate, FirstMinibatchHasUnitRatio) {
  Policy<double> pol(reduced(4));
  auto buf = sampled_buffer(pol, 4, 16, 5);
  PpoOptimizer opt;
  PpoConfig cfg;
  cfg.ppo_epochs = 1;
  cfg.minibatch_size = buf.size();
  std::mt19937_64 rng(1);
  const auto rep = ppo_update(pol, opt, buf, cfg, rng);
  EXPECT_EQ(rep.minibatches, 1u);
  EXPECT_NEAR(rep.actor_loss, 0.0, 1e-7);
  EXPECT_NEAR(rep.approx_kl, 0.0, 1e-12);
  EXPECT_EQ(rep.clip_fraction, 0.0);
}

TEST(PpoUpdate, EntropyCoefficientZeroContributesNothing) {
  // with entropy_coef = 0 the update must match one computed by hand from the clipped
  // surrogate alone; compare against a policy updated with a tiny nonzero coefficient
  Policy<double> base(reduced(6));
  auto buf = sampled_buffer(base, 2, 16, 7);
  PpoConfig cfg;
  cfg.ppo_epochs = 1;
  cfg.minibatch_size = buf.size();
  cfg.max_grad_norm = 0.0;
  cfg.threads = 1;

  Policy<double> a = base, b = base;
  PpoOptimizer oa, ob;
  std::mt19937_64 ra(1), rb(1);
  ppo_update(a, oa, buf, cfg, ra);
  // the same update with the entropy branch disabled in a different way: a huge batch
  // scale on nothing. Recompute the gradient directly and take one Adam step.
  std::vector<double> g(b.actor().params.size(), 0.0);
  Policy<double>::Cache c;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const auto& tr = buf.at(i);
    const double* out = b.actor().forward(tr.obs, c.actor);
    std::array<double, 4> dlogp{}, dent{};
    b.actor_output_grads(out, tr.raw_action, dlogp, dent);
    const double ratio = std::exp(log_prob(b.distribution_from(out), tr.raw_action) - tr.log_prob);
    const double go = clipped_objective_grad(ratio, buf.advantages[i], cfg.clip);
    std::array<double, 4> dout{};
    for (int q = 0; q < 4; ++q) dout[q] = -go * dlogp[q] / static_cast<double>(buf.size());
    b.actor().backward(c.actor, dout.data(), g.data());
  }
  ob.actor.lr = cfg.lr_actor;
  ob.actor.step(b.actor().params, g);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(a.actor().params[i], b.actor().params[i], 1e-12);

  // and a nonzero coefficient does move the parameters differently
  Policy<double> e = base;
  PpoOptimizer oe;
  std::mt19937_64 re(1);
  auto cfg_e = cfg;
  cfg_e.entropy_coef = 0.1;
  ppo_update(e, oe, buf, cfg_e, re);
  EXPECT_NE(e.actor().params, a.actor().params);
}

TEST(PpoUpdate, ZeroLearningRateKeepsParamsBitIdentical) {
  Policy<float> pol(reduced(8));
  const auto actor = pol.actor().params;
  const auto critic = pol.critic().params;
  auto cfg = tiny_train(8);
  cfg.policy = pol.config();
  cfg.ppo.lr_actor = 0.0;
  cfg.ppo.lr_critic = 0.0;
  train(pol, cfg);
  EXPECT_EQ(pol.actor().params, actor);
  EXPECT_EQ(pol.critic().params, critic);
}

TEST(PpoUpdate, DivergenceRestoresParameters) {
  Policy<double> pol(reduced(9));
  auto buf = sampled_buffer(pol, 2, 16, 3);
  buf.returns[5] = 1e300;
  const auto actor = pol.actor().params;
  const auto critic = pol.critic().params;
  PpoOptimizer opt;
  PpoConfig cfg;
  cfg.minibatch_size = 8;
  std::mt19937_64 rng(1);
  try {
    ppo_update(pol, opt, buf, cfg, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NumericalDivergence);
  }
  EXPECT_EQ(pol.actor().params, actor);
  EXPECT_EQ(pol.critic().params, critic);
  EXPECT_EQ(opt.actor.t, 0);
}

TEST(PpoUpdate, ConfigValidation) {
  PpoConfig c;
  c.gamma = 0.0;
  EXPECT_THROW(validate(c), Error);
  c = {};
  c.gae_lambda = 1.5;
  EXPECT_THROW(validate(c), Error);
  c = {};
  c.clip = 0.0;
  EXPECT_THROW(validate(c), Error);
  EXPECT_NO_THROW(validate(PpoConfig{}));
}

TEST(Train, LogIsReproduciblePerSeed) {
  auto csv = [](std::uint64_t seed) {
    Policy<float> pol(reduced(seed));
    const auto res = train(pol, tiny_train(seed));
    std::string out = train_csv_header() + "\n";
    for (const auto& r : res.rows) out += train_csv_row(r) + "\n";
    return out;
  };
  const auto a = csv(1), b = csv(1), c = csv(2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Train, CountsAgentTransitions) {
  Policy<float> pol(reduced(3));
  const auto cfg = tiny_train(3);
  const auto res = train(pol, cfg);
  ASSERT_FALSE(res.rows.empty());
  // one robot per env: every update adds rollout_length * num_envs transitions
  EXPECT_EQ(res.rows[0].env_steps, cfg.rollout_length * cfg.num_envs);
  EXPECT_GE(res.env_steps, cfg.total_steps);
}
