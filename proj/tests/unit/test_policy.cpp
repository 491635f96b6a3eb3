#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "gpnav/policy.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace gpnav;

namespace {

PolicyConfig reduced(std::uint64_t seed = 3) {
  PolicyConfig c;
  c.network = oracle::reduced_network();
  c.seed = seed;
  return c;
}

std::vector<double> actor_out(const Policy<double>& p, const NormalizedObservation& o) {
  Policy<double>::Cache c;
  const double* out = p.actor().forward(o, c.actor);
  return {out, out + 4};
}

}  // namespace

TEST(Policy, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (std::size_t nodes : {0u, 1u, 3u}) {
    Policy<double> pol(reduced(5 + nodes));
    // spread the head so the log-prob gradient is not dominated by the tiny init scale
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto& w : pol.actor().params) w += 0.05 * n(rng);
    const auto obs = oracle::random_observation(rng, nodes);
    const std::array<double, 2> raw{0.3 + n(rng), n(rng)};
    const auto r = oracle::check_policy_gradients(pol, obs, raw);
    EXPECT_LT(r.max_rel_error, 1e-4) << nodes << " nodes";
    EXPECT_GT(r.checked, pol.parameter_count() * 9 / 10);
  }
}

TEST(Policy, DeterministicAndSharedAcrossAgents) {
  Policy<double> a(reduced(8)), b(reduced(8));
  std::mt19937_64 rng(2);
  const auto obs = oracle::random_observation(rng, 2);
  EXPECT_EQ(actor_out(a, obs), actor_out(a, obs));
  EXPECT_EQ(actor_out(a, obs), actor_out(b, obs));
  Policy<double>::Cache c1, c2;
  EXPECT_EQ(a.value(obs, c1), b.value(obs, c2));
}

TEST(Policy, StdIsPositiveForAnyInput) {
  Policy<double> p(reduced());
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 3.0);
  for (auto& w : p.actor().params) w += n(rng);
  Policy<double>::Cache c;
  for (int k = 0; k < 20; ++k) {
    const auto d = p.distribution(oracle::random_observation(rng, k % 4), c);
    EXPECT_GT(d.stddev[0], 0.0);
    EXPECT_GT(d.stddev[1], 0.0);
  }
}

TEST(GraphEncoder, PermutationInvariance) {
  Policy<double> p(reduced(11));
  std::mt19937_64 rng(9);
  auto obs = oracle::random_observation(rng, 6);
  const auto base = actor_out(p, obs);
  for (int t = 0; t < 10; ++t) {
    std::shuffle(obs.nodes.begin(), obs.nodes.end(), rng);
    const auto out = actor_out(p, obs);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(out[k], base[k], 1e-6);
  }
}

TEST(GraphEncoder, DuplicateNodeChangesOutput) {
  PolicyConfig cfg = reduced(13);
  nn::GraphEncoder g;
  g.hidden = cfg.network.node_hidden;
  g.heads = cfg.network.heads;
  g.head_dim = cfg.network.head_dim;
  std::vector<double> params(g.layout(0));
  std::mt19937_64 rng(1);
  g.init(params, rng);
  std::vector<std::array<double, 4>> nodes{{0.1, 0.2, 0.3, -0.1}, {0.3, -0.5, 0.0, 0.2}};
  nn::GraphEncoder::Cache<double> c;
  std::vector<double> a(g.hidden), b(g.hidden);
  g.forward(params.data(), nodes, c, a.data());
  nodes.push_back(nodes[0]);
  g.forward(params.data(), nodes, c, b.data());
  double diff = 0.0;
  for (std::size_t j = 0; j < g.hidden; ++j) diff = std::max(diff, std::abs(a[j] - b[j]));
  EXPECT_GT(diff, 1e-6);
}

TEST(GraphEncoder, EmptyGraphIsLearnedNullEmbedding) {
  nn::GraphEncoder g;
  g.hidden = 4;
  g.heads = 2;
  g.head_dim = 3;
  std::vector<double> params(g.layout(0));
  std::mt19937_64 rng(1);
  g.init(params, rng);
  nn::GraphEncoder::Cache<double> c;
  std::vector<double> out(4);
  g.forward(params.data(), {}, c, out.data());
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_TRUE(std::isfinite(out[j]));
    EXPECT_EQ(out[j], params[g.null_offset + j]);
  }
}

TEST(StaticEncoder, CircularPaddingLeavesNoEdgeArtifacts) {
  // Two stride-2 layers: for a constant scan, a shift-invariant readout (the sum of the
  // second layer's activations) has an input gradient with period 4 all the way around,
  // including across the 119 -> 0 seam.
  const nn::Conv1d c1{1, 3, 5, 2, kLidarBeams, 0};
  const nn::Conv1d c2{3, 4, 5, 2, c1.out_length(), c1.size()};
  std::vector<double> params(c1.size() + c2.size());
  std::mt19937_64 rng(17);
  c1.init(params, rng);
  c2.init(params, rng);
  for (std::size_t k = c1.bias_offset(); k < c1.bias_offset() + 3; ++k) params[k] = 0.2;

  auto readout = [&](const std::vector<double>& x) {
    std::vector<double> h1(c1.cout * c1.out_length()), h2(c2.cout * c2.out_length());
    c1.forward(params.data(), x.data(), h1.data());
    for (auto& v : h1) v = nn::relu(v);
    c2.forward(params.data(), h1.data(), h2.data());
    double s = 0.0;
    for (double v : h2) s += std::tanh(v);
    return s;
  };
  std::vector<double> x(kLidarBeams, 0.6);
  std::vector<double> fd(kLidarBeams);
  for (std::size_t k = 0; k < x.size(); ++k) fd[k] = oracle::central_diff([&] { return readout(x); }, x, k, 1e-6);

  double scale = 0.0;
  for (double g : fd) scale = std::max(scale, std::abs(g));
  ASSERT_GT(scale, 1e-6);
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(fd[k], fd[(k + 4) % x.size()], 1e-7 * scale) << k;
  // the seam neighbors see the same receptive-field layout as interior beams
  EXPECT_NEAR(std::abs(fd[0]), std::abs(fd[116]), 1e-7 * scale);
  EXPECT_NEAR(std::abs(fd[119]), std::abs(fd[3]), 1e-7 * scale);

  // and the analytic input gradient agrees with the probe
  std::vector<double> h1(c1.cout * c1.out_length()), h2(c2.cout * c2.out_length());
  c1.forward(params.data(), x.data(), h1.data());
  for (auto& v : h1) v = nn::relu(v);
  c2.forward(params.data(), h1.data(), h2.data());
  std::vector<double> dh2(h2.size()), dh1(h1.size(), 0.0), dx(x.size(), 0.0), g(params.size(), 0.0);
  for (std::size_t i = 0; i < h2.size(); ++i) dh2[i] = 1.0 - std::tanh(h2[i]) * std::tanh(h2[i]);
  c2.backward(params.data(), h1.data(), dh2.data(), g.data(), dh1.data());
  for (std::size_t i = 0; i < h1.size(); ++i)
    if (h1[i] <= 0.0) dh1[i] = 0.0;
  c1.backward(params.data(), x.data(), dh1.data(), g.data(), dx.data());
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(dx[k], fd[k], 1e-6 * scale);
}

TEST(StaticEncoder, MaxRangeInputIsFinite) {
  Policy<double> p(reduced());
  NormalizedObservation o;
  o.scans.fill(1.0);
  for (double v : actor_out(p, o)) EXPECT_TRUE(std::isfinite(v));
  o.scans.fill(0.0);
  for (double v : actor_out(p, o)) EXPECT_TRUE(std::isfinite(v));
}

TEST(TemporalEncoder, IdenticalVsDistinctFrames) {
  Policy<double> p(reduced(19));
  std::mt19937_64 rng(3);
  auto obs = oracle::random_observation(rng, 0);
  auto same = obs;
  for (std::size_t f = 0; f < 2; ++f)
    for (std::size_t k = 0; k < kLidarBeams; ++k) same.scans[f * kLidarBeams + k] = obs.current_scan()[k];
  const auto a = actor_out(p, obs);
  const auto b = actor_out(p, same);
  double diff = 0.0;
  for (std::size_t k = 0; k < 4; ++k) diff = std::max(diff, std::abs(a[k] - b[k]));
  EXPECT_GT(diff, 1e-9);
}

TEST(Sampling, VanishingStdGivesClampedMean) {
  ActionDistribution d;
  d.mean = {1.4, -0.3};
  d.stddev = {1e-12, 1e-12};
  std::mt19937_64 rng(1);
  const auto s = sample_action(d, rng);
  EXPECT_NEAR(s.action.v, 1.0, 1e-9);
  EXPECT_NEAR(s.action.w, -0.3, 1e-9);
  const auto det = deterministic_action(d);
  EXPECT_EQ(det.action.v, 1.0);
}

TEST(Sampling, LogProbAtMean) {
  ActionDistribution d;
  d.mean = {0.2, 0.1};
  d.stddev = {0.3, 0.7};
  const double expect = -(std::log(0.3 * std::sqrt(2 * kPi)) + std::log(0.7 * std::sqrt(2 * kPi)));
  EXPECT_NEAR(log_prob(d, d.mean), expect, 1e-12);
  EXPECT_NEAR(deterministic_action(d).log_prob, expect, 1e-12);
}

TEST(Sampling, EmpiricalMoments) {
  ActionDistribution d;
  d.mean = {0.5, -0.2};
  d.stddev = {0.4, 0.25};
  std::mt19937_64 rng(77);
  const int n = 100000;
  double s[2]{}, q[2]{};
  for (int i = 0; i < n; ++i) {
    const auto a = sample_action(d, rng);
    for (int k = 0; k < 2; ++k) {
      s[k] += a.raw[k];
      q[k] += a.raw[k] * a.raw[k];
    }
    EXPECT_NEAR(a.log_prob, log_prob(d, a.raw), 1e-12);
  }
  for (int k = 0; k < 2; ++k) {
    const double m = s[k] / n, sd = std::sqrt(q[k] / n - m * m);
    EXPECT_NEAR(m, d.mean[k], 0.01 * std::max(std::abs(d.mean[k]), d.stddev[k]));
    EXPECT_NEAR(sd, d.stddev[k], 0.01 * d.stddev[k]);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Policy<float> p(reduced(23));
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& w : p.actor().params) w += n(rng);
  const auto file = (std::filesystem::temp_directory_path() / "gpnav_policy_roundtrip.json").string();
  save_policy(p, file);
  const auto q = load_policy<float>(file);
  std::remove(file.c_str());
  EXPECT_EQ(q.config().network, p.config().network);
  EXPECT_EQ(q.actor().params, p.actor().params);
  EXPECT_EQ(q.critic().params, p.critic().params);

  Policy<double> pd(reduced(23));
  const auto qd = policy_from_json<double>(policy_to_json(pd));
  EXPECT_EQ(qd.actor().params, pd.actor().params);
}

TEST(Checkpoint, SizeMismatchAndBadFilesAreConfigErrors) {
  Policy<float> p(reduced());
  auto j = policy_to_json(p);
  j["actor"].erase(0);
  try {
    policy_from_json<float>(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
  }
  j = policy_to_json(p);
  j["version"] = 99;
  EXPECT_THROW(policy_from_json<float>(j), Error);
  EXPECT_THROW(load_policy<float>("/nonexistent/policy.json"), Error);
}
