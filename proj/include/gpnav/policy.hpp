#pragma once

// Actor and critic networks over normalized observations, Gaussian action head, sampling,
// log-probabilities and JSON checkpoints.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gpnav/error.hpp"
#include "gpnav/nn.hpp"
#include "gpnav/obs.hpp"
#include "gpnav/sim.hpp"

namespace gpnav {

struct NetworkConfig {
  std::size_t conv1_channels = 16;
  std::size_t conv2_channels = 32;
  std::size_t kernel = 5;
  std::size_t stride = 2;
  std::size_t node_hidden = 32;
  std::size_t heads = 2;
  std::size_t head_dim = 16;
  std::size_t trunk_width = 256;
  std::size_t trunk_layers = 2;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

inline void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = {{"conv1_channels", c.conv1_channels}, {"conv2_channels", c.conv2_channels},
       {"kernel", c.kernel},                 {"stride", c.stride},
       {"node_hidden", c.node_hidden},       {"heads", c.heads},
       {"head_dim", c.head_dim},             {"trunk_width", c.trunk_width},
       {"trunk_layers", c.trunk_layers}};
}

inline void from_json(const nlohmann::json& j, NetworkConfig& c) {
  const NetworkConfig d;
  c.conv1_channels = j.value("conv1_channels", d.conv1_channels);
  c.conv2_channels = j.value("conv2_channels", d.conv2_channels);
  c.kernel = j.value("kernel", d.kernel);
  c.stride = j.value("stride", d.stride);
  c.node_hidden = j.value("node_hidden", d.node_hidden);
  c.heads = j.value("heads", d.heads);
  c.head_dim = j.value("head_dim", d.head_dim);
  c.trunk_width = j.value("trunk_width", d.trunk_width);
  c.trunk_layers = j.value("trunk_layers", d.trunk_layers);
  if (c.kernel % 2 == 0 || c.stride == 0 || c.trunk_layers == 0 || c.heads == 0)
    throw Error(ErrorCode::Config, "invalid network shape");
}

/// Two parallel conv towers (current scan, full history), the graph encoder and an MLP trunk.
template <class T>
class Network {
 public:
  struct Cache {
    std::vector<T> scan1, scan_h1, scan_h2;
    std::vector<T> hist, hist_h1, hist_h2;
    nn::GraphEncoder::Cache<T> graph;
    std::vector<T> x0;
    std::vector<std::vector<T>> trunk;
    std::vector<T> out;
  };

  Network() = default;
  Network(const NetworkConfig& cfg, std::size_t out_dim) : cfg_(cfg), out_dim_(out_dim) {
    std::size_t off = 0;
    auto conv = [&](std::size_t cin, std::size_t cout, std::size_t len) {
      nn::Conv1d c{cin, cout, cfg.kernel, cfg.stride, len, off};
      off += c.size();
      return c;
    };
    scan1_ = conv(1, cfg.conv1_channels, kLidarBeams);
    scan2_ = conv(cfg.conv1_channels, cfg.conv2_channels, scan1_.out_length());
    hist1_ = conv(kScanHistoryLength, cfg.conv1_channels, kLidarBeams);
    hist2_ = conv(cfg.conv1_channels, cfg.conv2_channels, hist1_.out_length());
    graph_.hidden = cfg.node_hidden;
    graph_.heads = cfg.heads;
    graph_.head_dim = cfg.head_dim;
    off = graph_.layout(off);
    std::size_t in = feature_size();
    for (std::size_t l = 0; l < cfg.trunk_layers; ++l) {
      trunk_.push_back({in, cfg.trunk_width, off});
      off += trunk_.back().size();
      in = cfg.trunk_width;
    }
    head_ = {in, out_dim, off};
    off += head_.size();
    params.assign(off, T(0));
  }

  std::vector<T> params;

  const NetworkConfig& config() const { return cfg_; }
  std::size_t out_dim() const { return out_dim_; }
  std::size_t parameter_count() const { return params.size(); }
  const nn::Linear& head() const { return head_; }

  std::size_t feature_size() const {
    return cfg_.conv2_channels * scan2_.out_length() + cfg_.conv2_channels * hist2_.out_length() + cfg_.node_hidden +
           2 + 2 + 3;
  }

  template <class Rng>
  void init(Rng& rng, double head_scale) {
    scan1_.init(params, rng);
    scan2_.init(params, rng);
    hist1_.init(params, rng);
    hist2_.init(params, rng);
    graph_.init(params, rng);
    for (const auto& l : trunk_) l.init(params, rng);
    head_.init(params, rng, head_scale);
  }

  const T* forward(const NormalizedObservation& obs, Cache& c) const {
    const T* p = params.data();
    c.scan1.resize(kLidarBeams);
    const double* cur = obs.current_scan();
    for (int k = 0; k < kLidarBeams; ++k) c.scan1[static_cast<std::size_t>(k)] = static_cast<T>(cur[k]);
    c.hist.resize(obs.scans.size());
    for (std::size_t k = 0; k < obs.scans.size(); ++k) c.hist[k] = static_cast<T>(obs.scans[k]);

    conv_relu(scan1_, p, c.scan1, c.scan_h1);
    conv_relu(scan2_, p, c.scan_h1, c.scan_h2);
    conv_relu(hist1_, p, c.hist, c.hist_h1);
    conv_relu(hist2_, p, c.hist_h1, c.hist_h2);

    c.x0.resize(feature_size());
    T* x = c.x0.data();
    x = std::copy(c.scan_h2.begin(), c.scan_h2.end(), x);
    x = std::copy(c.hist_h2.begin(), c.hist_h2.end(), x);
    graph_.forward(p, obs.nodes, c.graph, x);
    x += cfg_.node_hidden;
    for (double v : obs.goal) *x++ = static_cast<T>(v);
    for (double v : obs.velocity) *x++ = static_cast<T>(v);
    for (double v : obs.path) *x++ = static_cast<T>(v);

    c.trunk.resize(trunk_.size());
    const T* in = c.x0.data();
    for (std::size_t l = 0; l < trunk_.size(); ++l) {
      auto& a = c.trunk[l];
      a.resize(trunk_[l].out);
      trunk_[l].forward(p, in, a.data());
      for (auto& v : a) v = nn::relu(v);
      in = a.data();
    }
    c.out.resize(out_dim_);
    head_.forward(p, in, c.out.data());
    for (const T v : c.out)
      if (!std::isfinite(v)) throw Error(ErrorCode::NumericalDivergence, "network produced a non-finite output");
    return c.out.data();
  }

  /// Accumulates dL/dparams into `grad` given dL/dout for the forward pass held in `c`.
  void backward(const Cache& c, const T* dout, T* grad) const {
    const T* p = params.data();
    std::vector<T> dx(trunk_.empty() ? c.x0.size() : trunk_.back().out, T(0));
    const T* last = trunk_.empty() ? c.x0.data() : c.trunk.back().data();
    head_.backward(p, last, dout, grad, dx.data());
    for (std::size_t l = trunk_.size(); l-- > 0;) {
      const auto& a = c.trunk[l];
      for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] <= T(0)) dx[i] = T(0);
      const T* in = l == 0 ? c.x0.data() : c.trunk[l - 1].data();
      std::vector<T> dprev(trunk_[l].in, T(0));
      trunk_[l].backward(p, in, dx.data(), grad, dprev.data());
      dx.swap(dprev);
    }
    const std::size_t ns = c.scan_h2.size();
    const std::size_t nh = c.hist_h2.size();
    std::vector<T> d2(dx.begin(), dx.begin() + static_cast<std::ptrdiff_t>(ns));
    conv_relu_backward(scan2_, p, c.scan_h1, c.scan_h2, d2, grad, true, [&](std::vector<T>& d1) {
      conv_relu_backward(scan1_, p, c.scan1, c.scan_h1, d1, grad, false, nullptr);
    });
    std::vector<T> e2(dx.begin() + static_cast<std::ptrdiff_t>(ns), dx.begin() + static_cast<std::ptrdiff_t>(ns + nh));
    conv_relu_backward(hist2_, p, c.hist_h1, c.hist_h2, e2, grad, true, [&](std::vector<T>& d1) {
      conv_relu_backward(hist1_, p, c.hist, c.hist_h1, d1, grad, false, nullptr);
    });
    graph_.backward(p, c.graph, dx.data() + ns + nh, grad);
  }

 private:
  static void conv_relu(const nn::Conv1d& conv, const T* p, const std::vector<T>& in, std::vector<T>& out) {
    out.resize(conv.cout * conv.out_length());
    conv.forward(p, in.data(), out.data());
    for (auto& v : out) v = nn::relu(v);
  }

  /// dy is the gradient w.r.t. the post-ReLU output; `below` receives the input gradient.
  template <class F>
  static void conv_relu_backward(const nn::Conv1d& conv, const T* p, const std::vector<T>& in,
                                 const std::vector<T>& out, std::vector<T>& dy, T* grad, bool need_dx, F&& below) {
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out[i] <= T(0)) dy[i] = T(0);
    if (!need_dx) {
      conv.backward(p, in.data(), dy.data(), grad, static_cast<T*>(nullptr));
      return;
    }
    std::vector<T> dx(in.size(), T(0));
    conv.backward(p, in.data(), dy.data(), grad, dx.data());
    if constexpr (!std::is_same_v<std::decay_t<F>, std::nullptr_t>) below(dx);
  }

  NetworkConfig cfg_;
  std::size_t out_dim_ = 1;
  nn::Conv1d scan1_, scan2_, hist1_, hist2_;
  nn::GraphEncoder graph_;
  std::vector<nn::Linear> trunk_;
  nn::Linear head_;
};

/// Diagonal Gaussian over (v, w) before clamping.
struct ActionDistribution {
  std::array<double, 2> mean{};
  std::array<double, 2> stddev{1.0, 1.0};
};

inline double log_prob(const ActionDistribution& d, const std::array<double, 2>& raw) {
  double lp = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double z = (raw[k] - d.mean[k]) / d.stddev[k];
    lp += -0.5 * z * z - std::log(d.stddev[k]) - 0.5 * std::log(2.0 * kPi);
  }
  return lp;
}

inline double entropy(const ActionDistribution& d) {
  double h = 0.0;
  for (double s : d.stddev) h += 0.5 * std::log(2.0 * kPi * std::exp(1.0)) + std::log(s);
  return h;
}

struct SampledAction {
  /// Clamped command sent to the simulator.
  Action action;
  /// Unclamped Gaussian sample; log-probabilities are evaluated on this.
  std::array<double, 2> raw{};
  double log_prob = 0.0;
};

template <class Rng>
SampledAction sample_action(const ActionDistribution& d, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  SampledAction s;
  for (int k = 0; k < 2; ++k) s.raw[k] = d.mean[k] + d.stddev[k] * n(rng);
  s.action = clamp_action({s.raw[0], s.raw[1]});
  s.log_prob = log_prob(d, s.raw);
  return s;
}

inline SampledAction deterministic_action(const ActionDistribution& d) {
  SampledAction s;
  s.raw = d.mean;
  s.action = clamp_action({d.mean[0], d.mean[1]});
  s.log_prob = log_prob(d, s.raw);
  return s;
}

struct PolicyConfig {
  NetworkConfig network;
  /// Initial action standard deviation (through the softplus head).
  double init_std = 0.5;
  /// Initial mean command: mid-range forward speed, no turn.
  double init_mean_v = 0.5;
  double min_std = 1e-3;
  std::uint64_t seed = 1;
};

template <class T>
class Policy {
 public:
  struct Cache {
    typename Network<T>::Cache actor, critic;
  };

  Policy() = default;
  explicit Policy(const PolicyConfig& cfg) : cfg_(cfg), actor_(cfg.network, 4), critic_(cfg.network, 1) {
    std::mt19937_64 rng(cfg.seed);
    actor_.init(rng, 0.01);
    critic_.init(rng, 1.0);
    const auto b = actor_.head().bias_offset();
    actor_.params[b + 0] = static_cast<T>(cfg.init_mean_v);
    actor_.params[b + 1] = T(0);
    const T s0 = static_cast<T>(std::log(std::expm1(cfg.init_std - cfg.min_std)));
    actor_.params[b + 2] = s0;
    actor_.params[b + 3] = s0;
  }

  const PolicyConfig& config() const { return cfg_; }
  Network<T>& actor() { return actor_; }
  Network<T>& critic() { return critic_; }
  const Network<T>& actor() const { return actor_; }
  const Network<T>& critic() const { return critic_; }
  std::size_t parameter_count() const { return actor_.parameter_count() + critic_.parameter_count(); }

  ActionDistribution distribution_from(const T* out) const {
    ActionDistribution d;
    for (int k = 0; k < 2; ++k) {
      d.mean[k] = static_cast<double>(out[k]);
      d.stddev[k] = static_cast<double>(nn::softplus(out[2 + k])) + cfg_.min_std;
    }
    return d;
  }

  ActionDistribution distribution(const NormalizedObservation& obs, Cache& c) const {
    return distribution_from(actor_.forward(obs, c.actor));
  }

  double value(const NormalizedObservation& obs, Cache& c) const {
    return static_cast<double>(critic_.forward(obs, c.critic)[0]);
  }

  /// d log pi(raw) / d actor_out and d entropy / d actor_out for the last actor forward pass.
  void actor_output_grads(const T* out, const std::array<double, 2>& raw, std::array<double, 4>& dlogp,
                          std::array<double, 4>& dent) const {
    const ActionDistribution d = distribution_from(out);
    for (int k = 0; k < 2; ++k) {
      const double s = d.stddev[k];
      const double z = (raw[k] - d.mean[k]) / s;
      const double dsig = static_cast<double>(nn::sigmoid(out[2 + k]));
      dlogp[k] = z / s;
      dlogp[2 + k] = (z * z - 1.0) / s * dsig;
      dent[k] = 0.0;
      dent[2 + k] = dsig / s;
    }
  }

 private:
  PolicyConfig cfg_;
  Network<T> actor_;
  Network<T> critic_;
};

inline constexpr int kCheckpointVersion = 1;

template <class T>
nlohmann::json policy_to_json(const Policy<T>& p) {
  nlohmann::json j;
  j["format"] = "gpnav-policy";
  j["version"] = kCheckpointVersion;
  j["network"] = p.config().network;
  j["init_std"] = p.config().init_std;
  j["init_mean_v"] = p.config().init_mean_v;
  j["min_std"] = p.config().min_std;
  j["seed"] = p.config().seed;
  auto dump = [](const std::vector<T>& v) {
    std::vector<double> d(v.begin(), v.end());
    return d;
  };
  j["actor"] = dump(p.actor().params);
  j["critic"] = dump(p.critic().params);
  return j;
}

template <class T>
Policy<T> policy_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "gpnav-policy") throw Error(ErrorCode::Config, "not a policy checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw Error(ErrorCode::Config, "unsupported checkpoint version " + std::to_string(j.value("version", 0)));
  PolicyConfig cfg;
  cfg.network = j.at("network").get<NetworkConfig>();
  cfg.init_std = j.value("init_std", cfg.init_std);
  cfg.init_mean_v = j.value("init_mean_v", cfg.init_mean_v);
  cfg.min_std = j.value("min_std", cfg.min_std);
  cfg.seed = j.value("seed", cfg.seed);
  Policy<T> p(cfg);
  auto load = [](const nlohmann::json& arr, std::vector<T>& dst, const char* what) {
    const auto v = arr.get<std::vector<double>>();
    if (v.size() != dst.size())
      throw Error(ErrorCode::Config, std::string("checkpoint ") + what + " has " + std::to_string(v.size()) +
                                         " parameters, architecture expects " + std::to_string(dst.size()));
    for (std::size_t i = 0; i < v.size(); ++i) dst[i] = static_cast<T>(v[i]);
  };
  load(j.at("actor"), p.actor().params, "actor");
  load(j.at("critic"), p.critic().params, "critic");
  return p;
}

template <class T>
void save_policy(const Policy<T>& p, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + file);
  out << policy_to_json(p).dump();
}

template <class T>
Policy<T> load_policy(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Config, "cannot open checkpoint " + file);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, "malformed checkpoint " + file + ": " + e.what());
  }
  return policy_from_json<T>(j);
}

}  // namespace gpnav
