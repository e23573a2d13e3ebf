#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "worldcloner/errors.hpp"
#include "worldcloner/experiment.hpp"

namespace {

using worldcloner::ConfigError;
using worldcloner::ExperimentConfig;

std::uint64_t parse_u64(const std::string& value, const std::string& what) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid " + what + ": '" + value + "'");
  }
}

double parse_f64(const std::string& value, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid " + what + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& value, const std::string& what) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("invalid " + what + ": '" + value + "' (want true/false)");
}

void apply_novelty_at(ExperimentConfig& cfg, const std::string& value) {
  std::string v = value;
  cfg.novelty.by_episodes = false;
  if (v.rfind("episodes:", 0) == 0) {
    cfg.novelty.by_episodes = true;
    v = v.substr(9);
  } else if (v.rfind("steps:", 0) == 0) {
    v = v.substr(6);
  }
  cfg.novelty.inject_at = parse_u64(v, "--novelty-at");
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  auto& a = cfg.adaptation;
  auto& p = a.policy;
  if (key == "env") {
    const auto e = worldcloner::env_from_name(value);
    if (!e) throw ConfigError("unknown env: " + value);
    cfg.env = *e;
  } else if (key == "novelty") {
    const auto n = worldcloner::novelty_from_name(value);
    if (!n) throw ConfigError("unknown novelty: " + value);
    cfg.novelty.kind = *n;
  } else if (key == "novelty_at") {
    apply_novelty_at(cfg, value);
  } else if (key == "agent") {
    const auto ag = worldcloner::agent_from_name(value);
    if (!ag) throw ConfigError("unknown agent: " + value);
    cfg.agent = *ag;
  } else if (key == "mix_ratio") {
    a.mix_real_fraction = parse_f64(value, key);
  } else if (key == "seeds") {
    cfg.seeds = static_cast<int>(parse_u64(value, key));
  } else if (key == "base_seed") {
    cfg.base_seed = parse_u64(value, key);
  } else if (key == "out") {
    cfg.out_dir = value;
  } else if (key == "strict") {
    cfg.strict = parse_bool(value, key);
  } else if (key == "render") {
    cfg.render = parse_bool(value, key);
  } else if (key == "alpha") {
    p.alpha = parse_f64(value, key);
  } else if (key == "gamma") {
    p.gamma = parse_f64(value, key);
  } else if (key == "epsilon_start") {
    p.epsilon_start = parse_f64(value, key);
  } else if (key == "epsilon_floor") {
    p.epsilon_floor = parse_f64(value, key);
  } else if (key == "epsilon_decay_steps") {
    p.epsilon_decay_steps = parse_u64(value, key);
  } else if (key == "q_init") {
    p.q_init = parse_f64(value, key);
  } else if (key == "imagination_horizon") {
    a.imagination_horizon = static_cast<int>(parse_u64(value, key));
  } else if (key == "buffer_capacity") {
    a.buffer_capacity = parse_u64(value, key);
  } else if (key == "pool_capacity") {
    a.pool_capacity = parse_u64(value, key);
  } else if (key == "update_period") {
    a.update_period = static_cast<int>(parse_u64(value, key));
  } else if (key == "batch_size") {
    a.batch_size = parse_u64(value, key);
  } else if (key == "detector_threshold") {
    a.detector_threshold = static_cast<int>(parse_u64(value, key));
  } else if (key == "max_pre_steps") {
    a.max_pre_steps = parse_u64(value, key);
  } else if (key == "max_monitor_steps") {
    a.max_monitor_steps = parse_u64(value, key);
  } else if (key == "max_post_steps") {
    a.max_post_steps = parse_u64(value, key);
  } else if (key == "convergence_window") {
    a.convergence_window = static_cast<int>(parse_u64(value, key));
  } else if (key == "convergence_span") {
    a.convergence_span = static_cast<int>(parse_u64(value, key));
  } else if (key == "convergence_rel_change") {
    a.convergence_rel_change = parse_f64(value, key);
  } else if (key == "probe_error_threshold") {
    a.probe_error_threshold = parse_f64(value, key);
  } else if (key == "probe_steps") {
    a.probe_steps = parse_u64(value, key);
  } else if (key == "probe_period_episodes") {
    a.probe_period_episodes = static_cast<int>(parse_u64(value, key));
  } else if (key == "ma_window") {
    cfg.ma_window = static_cast<int>(parse_u64(value, key));
  } else if (key == "tail_window") {
    cfg.tail_window = static_cast<int>(parse_u64(value, key));
  } else if (key == "random_baseline_episodes") {
    cfg.random_baseline_episodes = static_cast<int>(parse_u64(value, key));
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    apply_key(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rule-learning world-model agent with novelty detection and\n"
               "imagination-based adaptation on small grid worlds."};
  app.get_formatter()->column_width(28);

  std::string env = "doorkey";
  std::string novelty = "none";
  std::string novelty_at;
  std::string agent = "worldcloner";
  double mix_ratio = 0.6;
  int seeds = 1;
  std::string max_pre_steps;
  std::string out_dir;
  bool strict = false;
  bool render = false;
  std::string config_path;

  app.add_option("--env", env, "Environment: doorkey | lavamaze | empty")
      ->capture_default_str();
  app.add_option("--novelty", novelty,
                 "Injected change: doorkeychange | lavaproof | lavahurts | none")
      ->capture_default_str();
  app.add_option("--novelty-at", novelty_at,
                 "Injection threshold: global steps N, or episodes:N (default 60000 steps)");
  app.add_option("--agent", agent, "Agent: worldcloner | baseline")->capture_default_str();
  auto* mix_opt = app.add_option(
      "--mix-ratio", mix_ratio,
      "Real fraction of the real/imagined step mix, in (0, 1] (worldcloner only)");
  app.add_option("--seeds", seeds, "Number of consecutive seeds to run")
      ->capture_default_str();
  app.add_option("--max-pre-steps", max_pre_steps,
                 "Pre-novelty training step budget before timing out");
  app.add_option("--out", out_dir, "Output directory for CSV/JSON artifacts");
  app.add_flag("--strict", strict, "Exit 3 when any run fails to adapt");
  app.add_flag("--render", render, "Print the grid before and after each run");
  app.add_option("--config", config_path,
                 "key=value config file; command-line flags take precedence");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    ExperimentConfig cfg = worldcloner::default_experiment_config();
    if (!config_path.empty()) apply_config_file(cfg, config_path);

    if (app.count("--env")) apply_key(cfg, "env", env);
    if (app.count("--novelty")) apply_key(cfg, "novelty", novelty);
    if (app.count("--novelty-at")) apply_novelty_at(cfg, novelty_at);
    if (app.count("--agent")) apply_key(cfg, "agent", agent);
    if (app.count("--seeds")) cfg.seeds = seeds;
    if (app.count("--max-pre-steps"))
      cfg.adaptation.max_pre_steps = parse_u64(max_pre_steps, "--max-pre-steps");
    if (app.count("--out")) cfg.out_dir = out_dir;
    if (strict) cfg.strict = true;
    if (render) cfg.render = true;

    if (mix_opt->count() > 0) {
      if (cfg.agent == worldcloner::AgentKind::Baseline)
        throw ConfigError("--mix-ratio does not apply to the baseline agent");
      cfg.adaptation.mix_real_fraction = mix_ratio;
    }
    if (cfg.seeds < 1) throw ConfigError("--seeds must be at least 1");

    const nlohmann::json summary = worldcloner::run_matrix(cfg);
    const auto& agg = summary.at("aggregate");
    std::cout << "runs: " << agg.at("runs") << "  injected: " << agg.at("injected_runs")
              << "  detected: " << agg.at("detected_runs")
              << "  failed_to_adapt: " << agg.at("failed_to_adapt_runs") << "\n";
    std::cout << "aggregate: " << agg.dump(2) << "\n";
    if (!cfg.out_dir.empty()) std::cout << "artifacts written to " << cfg.out_dir << "\n";

    if (cfg.strict && agg.at("failed_to_adapt_runs").get<int>() > 0) return 3;
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    std::cerr << "run with --help for usage\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
