// gpnav command line: run / grid / ablation benchmarks, training, scenario export, replay.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gpnav/bench.hpp"
#include "gpnav/io.hpp"
#include "gpnav/policy.hpp"
#include "gpnav/scenarios.hpp"
#include "gpnav/train.hpp"

namespace fs = std::filesystem;
using namespace gpnav;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + file.string());
  out << text;
}

bool parse_on_off(const std::string& s) {
  if (s == "on" || s == "true" || s == "1") return true;
  if (s == "off" || s == "false" || s == "0") return false;
  throw Error(ErrorCode::Config, "expected on|off, got '" + s + "'");
}

LogOptions parse_log_flags(const std::vector<std::string>& flags) {
  LogOptions o;
  o.trajectory = false;
  for (const auto& f : flags) {
    if (f == "trajectory") o.trajectory = true;
    else if (f == "paths") o.paths = true;
    else if (f == "scans") o.scans = true;
    else if (f == "tracks") o.tracks = true;
    else if (f == "observations") o.observations = true;
    else if (f == "rewards") o.rewards = true;
    else if (f == "all") o = {true, true, true, true, true, true};
    else throw Error(ErrorCode::Config, "unknown log flag '" + f + "'");
  }
  return o;
}

// Scenario size used by the comparison suite; plus and room keep the ScenarioSpec defaults.
ScenarioSpec spec_for(ScenarioKind kind, std::size_t agents) {
  if (kind == ScenarioKind::Plus || kind == ScenarioKind::Room) {
    ScenarioSpec s;
    s.kind = kind;
    s.num_agents = agents;
    return s;
  }
  return eval_suite(kind, agents);
}

struct RunArgs {
  std::string scenario = "circle";
  std::string scenario_file;
  std::size_t agents = 10;
  double scale = 0.0;
  std::string controller = "orca";
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::string noise = "on";
  std::string ablation = "none";
  std::string checkpoint;
  std::string out;
  std::string config;
  std::vector<std::string> log;
  std::size_t threads = 0;
  bool stochastic = false;
};

// JSON config supplies defaults; flags given on the command line win.
void apply_run_config(RunArgs& a, const CLI::App& app) {
  if (a.config.empty()) return;
  const json j = read_json_file(a.config);
  auto take = [&](const char* key, const char* flag, auto& dst) {
    if (j.contains(key) && app.count(flag) == 0) {
      try {
        dst = j.at(key).get<std::decay_t<decltype(dst)>>();
      } catch (const json::exception& e) {
        throw Error(ErrorCode::Config, std::string("bad value for '") + key + "': " + e.what());
      }
    }
  };
  take("scenario", "--scenario", a.scenario);
  take("scenario_file", "--scenario-file", a.scenario_file);
  take("agents", "--agents", a.agents);
  take("scale", "--scale", a.scale);
  take("controller", "--controller", a.controller);
  take("trials", "--trials", a.trials);
  take("seed", "--seed", a.seed);
  if (j.contains("noise") && app.count("--noise") == 0)
    a.noise = j.at("noise").is_boolean() ? (j.at("noise").get<bool>() ? "on" : "off") : j.at("noise").get<std::string>();
  take("ablation", "--ablation", a.ablation);
  take("checkpoint", "--checkpoint", a.checkpoint);
  take("out", "--out", a.out);
  take("log", "--log", a.log);
  take("threads", "--threads", a.threads);
  take("stochastic", "--stochastic", a.stochastic);
}

RunConfig make_run_config(const RunArgs& a) {
  RunConfig cfg;
  if (!a.scenario_file.empty()) {
    cfg.fixed = scenario_from_json(read_json_file(a.scenario_file));
  } else {
    const ScenarioKind kind = parse_scenario_kind(a.scenario);
    if (!is_table_agent_count(kind, a.agents))
      std::cerr << "warning: " << a.agents << " agents is not one of the comparison-table counts for " << a.scenario
                << "\n";
    cfg.spec = spec_for(kind, a.agents);
    if (a.scale > 0.0) cfg.spec.scale = a.scale;
  }
  cfg.controller = parse_controller(a.controller);
  if (a.trials == 0) throw Error(ErrorCode::Config, "trials must be >= 1");
  cfg.trials = a.trials;
  cfg.seed = a.seed;
  cfg.env.noise.enabled = parse_on_off(a.noise);
  cfg.env.ablation = parse_ablation(a.ablation);
  cfg.threads = a.threads;
  cfg.stochastic = a.stochastic;
  if (!a.checkpoint.empty()) cfg.policy = std::make_shared<const Policy<float>>(load_policy<float>(a.checkpoint));
  if (cfg.controller == ControllerKind::Policy && !cfg.policy)
    throw Error(ErrorCode::Config, "--controller policy needs --checkpoint");
  if (!a.log.empty()) {
    cfg.log = parse_log_flags(a.log);
    if (a.out.empty()) throw Error(ErrorCode::Config, "--log needs --out");
    cfg.log_dir = (fs::path(a.out) / "logs").string();
  }
  return cfg;
}

ReportRow report_row(const RunConfig& cfg, const std::string& scenario, const EpisodeMetrics& m) {
  ReportRow r;
  r.scenario = scenario;
  r.agents = cfg.fixed ? cfg.fixed->agents.size() : cfg.spec.num_agents;
  r.controller = std::string(to_string(cfg.controller));
  r.ablation = std::string(to_string(cfg.env.ablation));
  r.noise = cfg.env.noise.enabled;
  r.trials = cfg.trials;
  r.seed = cfg.seed;
  r.metrics = m;
  return r;
}

int cmd_run(const RunArgs& a) {
  const RunConfig cfg = make_run_config(a);
  const auto episodes = run_trials(cfg);
  const std::string name = cfg.fixed ? cfg.fixed->name : std::string(to_string(cfg.spec.kind));
  const ReportRow row = report_row(cfg, name, aggregate(episodes));
  const std::string csv = report_csv({row});
  std::cout << csv;
  if (!a.out.empty()) {
    write_text(fs::path(a.out) / "summary.csv", csv);
    write_text(fs::path(a.out) / "episodes.csv", episodes_csv(episodes));
  }
  return 0;
}

int cmd_grid(RunArgs a, const std::vector<std::string>& scenarios) {
  std::vector<ReportRow> rows;
  for (const auto& s : scenarios) {
    const ScenarioKind kind = parse_scenario_kind(s);
    for (std::size_t n : table_agent_counts(kind)) {
      a.scenario = s;
      a.agents = n;
      const RunConfig cfg = make_run_config(a);
      const auto t0 = std::chrono::steady_clock::now();
      rows.push_back(report_row(cfg, s, aggregate(run_trials(cfg))));
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cerr << s << " " << n << ": success " << fmt_fixed(rows.back().metrics.success_rate, 3) << " (" << secs
                << " s)\n";
    }
  }
  std::cout << comparison_table(rows);
  if (!a.out.empty()) {
    write_text(fs::path(a.out) / "grid.csv", report_csv(rows));
    write_text(fs::path(a.out) / "table.md", comparison_table(rows));
  }
  return 0;
}

int cmd_ablation(RunArgs a, const std::string& full, const std::string& no_gp, const std::string& no_gnn) {
  std::vector<ReportRow> rows;
  const std::pair<const char*, std::string> variants[] = {{"none", full}, {"no-gp", no_gp}, {"no-gnn", no_gnn}};
  for (const auto& [ablation, ckpt] : variants) {
    if (ckpt.empty()) continue;
    a.controller = "policy";
    a.ablation = ablation;
    a.checkpoint = ckpt;
    const RunConfig cfg = make_run_config(a);
    rows.push_back(report_row(cfg, a.scenario, aggregate(run_trials(cfg))));
  }
  if (rows.empty()) throw Error(ErrorCode::Config, "ablation needs at least one checkpoint");
  std::cout << ablation_table(rows);
  if (!a.out.empty()) {
    write_text(fs::path(a.out) / "ablation.csv", report_csv(rows));
    write_text(fs::path(a.out) / "ablation.md", ablation_table(rows));
  }
  return 0;
}

int cmd_train(const std::string& config, const std::string& out, std::size_t steps, std::size_t threads) {
  TrainConfig cfg = train_config_from_json(read_json_file(config));
  if (!out.empty()) cfg.out_dir = out;
  if (steps) cfg.total_steps = steps;
  if (threads) cfg.ppo.threads = threads;
  Policy<float> policy(cfg.policy);
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = train(policy, cfg, [&](const TrainRow& r) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "update " << r.update << " steps " << r.env_steps << " return " << fmt_fixed(r.mean_return, 3)
              << " eval " << fmt_fixed(r.eval_success, 3) << " kl " << fmt_fixed(r.ppo.approx_kl, 5) << " ("
              << static_cast<long>(secs) << " s)\n";
  });
  std::cout << "env_steps " << res.env_steps << " eval_success " << fmt_fixed(res.final_eval_success, 3)
            << (res.reached_target ? " target reached" : "") << "\n";
  return 0;
}

int cmd_scenario(const std::string& kind, std::size_t agents, double scale, std::uint64_t seed,
                 const std::string& out) {
  ScenarioSpec s = spec_for(parse_scenario_kind(kind), agents);
  if (scale > 0.0) s.scale = scale;
  s.rng_seed = seed;
  const std::string text = scenario_to_json(generate(s)).dump(2) + "\n";
  if (out.empty()) std::cout << text;
  else write_text(out, text);
  return 0;
}

int cmd_init_policy(const std::string& out, const std::string& network, std::uint64_t seed) {
  PolicyConfig cfg;
  cfg.seed = seed;
  if (!network.empty()) cfg.network = read_json_file(network).get<NetworkConfig>();
  save_policy(Policy<float>(cfg), out);
  return 0;
}

int cmd_replay(const std::string& log, const std::string& svg) {
  write_text(svg, render_svg(read_jsonl(log)));
  return 0;
}

void add_run_options(CLI::App* c, RunArgs& a) {
  c->add_option("--scenario", a.scenario, "circle|doorway|hallway|random|plus|room");
  c->add_option("--scenario-file", a.scenario_file, "Fixed scenario JSON (overrides --scenario)");
  c->add_option("--agents", a.agents, "Number of robots");
  c->add_option("--scale", a.scale, "Scenario size in meters (default: suite size)");
  c->add_option("--controller", a.controller, "orca|policy|straight");
  c->add_option("--trials", a.trials, "Number of seeded trials");
  c->add_option("--seed", a.seed, "Base seed; trial k uses seed + k");
  c->add_option("--noise", a.noise, "State and LiDAR noise on|off");
  c->add_option("--ablation", a.ablation, "none|no-gp|no-gnn");
  c->add_option("--checkpoint", a.checkpoint, "Policy checkpoint JSON");
  c->add_option("--out", a.out, "Output directory");
  c->add_option("--config", a.config, "JSON file with defaults for these options");
  c->add_option("--log", a.log, "trajectory,paths,scans,tracks,observations,rewards,all")->delimiter(',');
  c->add_option("--threads", a.threads, "Worker threads (0: all cores)");
  c->add_flag("--stochastic", a.stochastic, "Sample policy actions instead of using the mean");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gpnav: multi-robot navigation benchmark and PPO trainer"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run seeded trials and write summary.csv / episodes.csv");
  add_run_options(run, run_args);

  RunArgs grid_args;
  grid_args.trials = 50;
  std::vector<std::string> grid_scenarios{"circle", "doorway", "hallway", "random"};
  auto* grid = app.add_subcommand("grid", "Sweep scenario families and table agent counts");
  add_run_options(grid, grid_args);
  grid->add_option("--scenarios", grid_scenarios, "Scenario families")->delimiter(',');

  RunArgs abl_args;
  abl_args.scenario = "doorway";
  abl_args.agents = 15;
  abl_args.trials = 250;
  std::string ck_full, ck_nogp, ck_nognn;
  auto* abl = app.add_subcommand("ablation", "Compare full / no-gp / no-gnn checkpoints");
  add_run_options(abl, abl_args);
  abl->add_option("--full", ck_full, "Checkpoint trained with all inputs");
  abl->add_option("--no-gp", ck_nogp, "Checkpoint trained without the global path");
  abl->add_option("--no-gnn", ck_nognn, "Checkpoint trained without the graph encoder");

  std::string train_config, train_out;
  std::size_t train_steps = 0, train_threads = 0;
  auto* tr = app.add_subcommand("train", "Train a policy with PPO");
  tr->add_option("--config", train_config, "Training config JSON")->required();
  tr->add_option("--out", train_out, "Output directory (overrides config)");
  tr->add_option("--steps", train_steps, "Environment step budget (overrides config)");
  tr->add_option("--threads", train_threads, "Worker threads");

  std::string sc_kind = "circle", sc_out;
  std::size_t sc_agents = 10;
  double sc_scale = 0.0;
  std::uint64_t sc_seed = 0;
  auto* sc = app.add_subcommand("scenario", "Generate a scenario and print or save it as JSON");
  sc->add_option("--scenario", sc_kind, "Scenario family");
  sc->add_option("--agents", sc_agents, "Number of robots");
  sc->add_option("--scale", sc_scale, "Scenario size in meters");
  sc->add_option("--seed", sc_seed, "Generation seed");
  sc->add_option("--out", sc_out, "Output file (default: stdout)");

  std::string ip_out, ip_network;
  std::uint64_t ip_seed = 1;
  auto* ip = app.add_subcommand("init-policy", "Write a freshly initialized policy checkpoint");
  ip->add_option("--out", ip_out, "Checkpoint file")->required();
  ip->add_option("--network", ip_network, "Network config JSON");
  ip->add_option("--seed", ip_seed, "Initialization seed");

  std::string rp_log, rp_svg;
  auto* rp = app.add_subcommand("replay", "Render a JSON-lines episode log to SVG");
  rp->add_option("--log", rp_log, "Episode log (.jsonl)")->required();
  rp->add_option("--svg", rp_svg, "Output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      apply_run_config(run_args, *run);
      return cmd_run(run_args);
    }
    if (*grid) {
      apply_run_config(grid_args, *grid);
      return cmd_grid(grid_args, grid_scenarios);
    }
    if (*abl) {
      apply_run_config(abl_args, *abl);
      return cmd_ablation(abl_args, ck_full, ck_nogp, ck_nognn);
    }
    if (*tr) return cmd_train(train_config, train_out, train_steps, train_threads);
    if (*sc) return cmd_scenario(sc_kind, sc_agents, sc_scale, sc_seed, sc_out);
    if (*ip) return cmd_init_policy(ip_out, ip_network, ip_seed);
    if (*rp) return cmd_replay(rp_log, rp_svg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::NumericalDivergence ? kExitDiverged : kExitConfig;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
