#include "worldcloner/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "worldcloner/errors.hpp"
#include "worldcloner/rng.hpp"

namespace worldcloner {

const char* agent_name(AgentKind k) {
  return k == AgentKind::WorldCloner ? "worldcloner" : "baseline";
}

std::optional<AgentKind> agent_from_name(std::string_view name) {
  if (name == "worldcloner") return AgentKind::WorldCloner;
  if (name == "baseline") return AgentKind::Baseline;
  return std::nullopt;
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.adaptation.policy.alpha = 0.1;
  cfg.adaptation.policy.gamma = 0.99;
  cfg.adaptation.policy.epsilon_start = 1.0;
  cfg.adaptation.policy.epsilon_floor = 0.1;
  cfg.adaptation.policy.epsilon_decay_steps = 400000;
  // Returns only stabilize once the exploration rate has bottomed out, so the
  // pre-novelty budget must stretch past the decay horizon.
  cfg.adaptation.max_pre_steps = 600000;
  // One batched update per real step. Replaying harder than this right after
  // a change entrenches rollouts from the not-yet-corrected model.
  cfg.adaptation.update_period = 8;
  cfg.adaptation.batch_size = 8;
  cfg.adaptation.probe_error_threshold = 1e-9;
  return cfg;
}

nlohmann::json ExperimentConfig::to_json() const {
  return nlohmann::json{
      {"env", env_name_string(env)},
      {"novelty",
       {{"kind", novelty_name_string(novelty.kind)},
        {"inject_at", novelty.inject_at},
        {"by_episodes", novelty.by_episodes}}},
      {"agent", agent_name(agent)},
      {"seeds", seeds},
      {"base_seed", base_seed},
      {"mix_ratio", adaptation.mix_real_fraction},
      {"policy",
       {{"alpha", adaptation.policy.alpha},
        {"gamma", adaptation.policy.gamma},
        {"epsilon_start", adaptation.policy.epsilon_start},
        {"epsilon_floor", adaptation.policy.epsilon_floor},
        {"epsilon_decay_steps", adaptation.policy.epsilon_decay_steps},
        {"q_init", adaptation.policy.q_init}}},
      {"adaptation",
       {{"imagination_horizon", adaptation.imagination_horizon},
        {"buffer_capacity", adaptation.buffer_capacity},
        {"pool_capacity", adaptation.pool_capacity},
        {"update_period", adaptation.update_period},
        {"batch_size", adaptation.batch_size},
        {"detector_threshold", adaptation.detector_threshold},
        {"max_pre_steps", adaptation.max_pre_steps},
        {"max_monitor_steps", adaptation.max_monitor_steps},
        {"max_post_steps", adaptation.max_post_steps},
        {"convergence_window", adaptation.convergence_window},
        {"convergence_span", adaptation.convergence_span},
        {"convergence_rel_change", adaptation.convergence_rel_change},
        {"probe_error_threshold", adaptation.probe_error_threshold},
        {"probe_steps", adaptation.probe_steps},
        {"probe_period_episodes", adaptation.probe_period_episodes}}},
      {"ma_window", ma_window},
      {"tail_window", tail_window},
      {"random_baseline_episodes", random_baseline_episodes},
      {"strict", strict},
      {"render", render}};
}

nlohmann::json RunResult::to_json() const {
  return nlohmann::json{{"seed", seed},
                        {"phases",
                         {{"pre", pre.to_json()},
                          {"monitor", monitor.to_json()},
                          {"post", post.to_json()}}},
                        {"injection_step", injection_step},
                        {"detection_step", detection_step},
                        {"updates_at_injection", updates_at_injection},
                        {"episode_count", episodes.size()},
                        {"rule_count", rule_count},
                        {"metrics", metrics.to_json()}};
}

void write_events_header(std::ostream& out) {
  out << "step,episode,phase,provenance,action,reward,terminal,rule_count,detections,updates\n";
}

StepSink make_csv_sink(std::ostream& out) {
  return [&out](const StepEvent& e) {
    out << e.step << ',' << e.episode << ',' << e.phase << ','
        << provenance_name(e.provenance) << ',' << action_name(static_cast<Action>(e.action))
        << ',' << e.reward << ',' << (e.terminal ? 1 : 0) << ',' << e.rule_count << ','
        << e.detections << ',' << e.updates << '\n';
  };
}

void write_episodes_csv(std::ostream& out, const std::vector<EpisodeRecord>& episodes,
                        int ma_window) {
  out << "episode,end_step,phase,return,length,updates,return_ma\n";
  std::vector<double> window;
  double sum = 0.0;
  std::size_t head = 0;
  for (const EpisodeRecord& r : episodes) {
    if (window.size() < static_cast<std::size_t>(ma_window)) {
      window.push_back(r.episode_return);
      sum += r.episode_return;
    } else {
      sum += r.episode_return - window[head];
      window[head] = r.episode_return;
      head = (head + 1) % window.size();
    }
    out << r.index << ',' << r.end_step << ',' << r.phase << ',' << r.episode_return << ','
        << r.length << ',' << r.updates_at_end << ',';
    if (window.size() == static_cast<std::size_t>(ma_window))
      out << sum / static_cast<double>(ma_window);
    out << '\n';
  }
}

double random_policy_performance(EnvName env_name, NoveltySpec novelty, std::uint64_t seed,
                                 int episodes) {
  if (episodes < 1) throw ConfigError("random baseline needs at least one episode");
  NoveltySpec immediate = novelty;
  immediate.inject_at = 0;
  immediate.by_episodes = false;
  GridEnv env = GridEnv::build(env_name, immediate, derive_seed(seed, 0xB0));
  if (immediate.kind != NoveltyKind::None) env.inject_novelty();
  Rng rng = make_rng(seed, 0xB1);
  double total = 0.0;
  for (int i = 0; i < episodes; ++i) {
    env.reset();
    while (env.episode_active()) {
      const auto a =
          static_cast<Action>(next_below(rng, static_cast<std::uint64_t>(kGridActionCount)));
      total += env.step(a).reward;
    }
  }
  return total / static_cast<double>(episodes);
}

RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed,
                     std::ostream* events_csv) {
  GridEnv env = GridEnv::build(cfg.env, cfg.novelty, seed);
  StepSink sink;
  if (events_csv) sink = make_csv_sink(*events_csv);

  RunResult r;
  r.seed = seed;
  if (cfg.render) std::cout << env_name_string(cfg.env) << " seed " << seed << "\n";

  if (cfg.agent == AgentKind::WorldCloner) {
    AdaptationLoop loop(env, cfg.adaptation, seed, sink);
    r.pre = loop.run_pre_novelty();
    if (cfg.novelty.kind != NoveltyKind::None) {
      r.monitor = loop.run_monitor();
      if (loop.detector().fired()) r.post = loop.run_post_novelty();
    }
    r.injection_step = loop.injection_step();
    r.detection_step = loop.detection_step();
    r.updates_at_injection = loop.updates_at_injection();
    r.episodes = loop.episodes();
    r.rule_count = loop.model().rule_count();
  } else {
    BaselineLoop loop(env, cfg.adaptation, seed, sink);
    r.pre = loop.run_pre();
    r.post = loop.run_post();
    r.injection_step = loop.injection_step();
    r.updates_at_injection = loop.updates_at_injection();
    r.episodes = loop.episodes();
  }

  std::optional<double> random_perf;
  if (r.injection_step > 0)
    random_perf =
        random_policy_performance(cfg.env, cfg.novelty, seed, cfg.random_baseline_episodes);
  r.metrics = compute_metrics(r.episodes, r.injection_step, r.updates_at_injection, random_perf,
                              cfg.ma_window, cfg.tail_window);
  if (cfg.render) std::cout << env.render();
  return r;
}

namespace {

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mean(const std::vector<double>& values) {
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

nlohmann::json aggregate(const std::vector<RunResult>& results) {
  std::vector<double> pre_perf, asym, rand_perf, adapt_steps, update_counts;
  int failed = 0, detected = 0, injected = 0, post_converged = 0;
  for (const RunResult& r : results) {
    pre_perf.push_back(r.metrics.pre_novelty_performance);
    if (r.metrics.asymptotic_adaptive_performance)
      asym.push_back(*r.metrics.asymptotic_adaptive_performance);
    if (r.metrics.random_baseline_performance)
      rand_perf.push_back(*r.metrics.random_baseline_performance);
    if (r.metrics.adaptive_efficiency_steps)
      adapt_steps.push_back(static_cast<double>(*r.metrics.adaptive_efficiency_steps));
    if (r.metrics.update_efficiency_updates)
      update_counts.push_back(static_cast<double>(*r.metrics.update_efficiency_updates));
    if (r.metrics.failed_to_adapt) ++failed;
    if (r.detection_step > 0) ++detected;
    if (r.injection_step > 0) ++injected;
    if (r.post.converged) ++post_converged;
  }
  nlohmann::json j;
  j["runs"] = results.size();
  j["injected_runs"] = injected;
  j["detected_runs"] = detected;
  j["post_converged_runs"] = post_converged;
  j["failed_to_adapt_runs"] = failed;
  const auto opt_mean = [](const std::vector<double>& v) {
    return v.empty() ? nlohmann::json() : nlohmann::json(mean(v));
  };
  const auto opt_median = [](std::vector<double> v) {
    return v.empty() ? nlohmann::json() : nlohmann::json(median(std::move(v)));
  };
  j["mean_pre_novelty_performance"] = opt_mean(pre_perf);
  j["mean_asymptotic_adaptive_performance"] = opt_mean(asym);
  j["mean_random_baseline_performance"] = opt_mean(rand_perf);
  j["median_adaptive_efficiency_steps"] = opt_median(adapt_steps);
  j["mean_adaptive_efficiency_steps"] = opt_mean(adapt_steps);
  j["median_update_efficiency_updates"] = opt_median(update_counts);
  j["mean_update_efficiency_updates"] = opt_mean(update_counts);
  return j;
}

}  // namespace

nlohmann::json run_matrix(const ExperimentConfig& cfg) {
  if (cfg.seeds < 1) throw ConfigError("seed count must be at least 1");
  namespace fs = std::filesystem;
  const bool write = !cfg.out_dir.empty();
  if (write) fs::create_directories(cfg.out_dir);

  nlohmann::json runs = nlohmann::json::array();
  std::vector<RunResult> results;
  results.reserve(static_cast<std::size_t>(cfg.seeds));

  for (int k = 0; k < cfg.seeds; ++k) {
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(k);
    fs::path run_dir;
    std::ofstream events;
    if (write) {
      run_dir = fs::path(cfg.out_dir) /
                (std::string(agent_name(cfg.agent)) + "-" + env_name_string(cfg.env) + "-" +
                 novelty_name_string(cfg.novelty.kind) + "-s" + std::to_string(seed));
      fs::create_directories(run_dir);
      events.open(run_dir / "events.csv");
      if (!events) throw ConfigError("cannot write into " + run_dir.string());
      write_events_header(events);
    }

    RunResult r = run_single(cfg, seed, write ? &events : nullptr);

    if (write) {
      events.close();
      std::ofstream eps(run_dir / "episodes.csv");
      write_episodes_csv(eps, r.episodes, cfg.ma_window);
      nlohmann::json doc = r.to_json();
      doc["schema_version"] = 1;
      doc["config"] = cfg.to_json();
      std::ofstream mj(run_dir / "metrics.json");
      mj << doc.dump(2) << '\n';
    }
    runs.push_back(r.to_json());
    results.push_back(std::move(r));
  }

  nlohmann::json summary{{"schema_version", 1},
                         {"config", cfg.to_json()},
                         {"runs", std::move(runs)},
                         {"aggregate", aggregate(results)}};
  if (write) {
    std::ofstream f(fs::path(cfg.out_dir) / "summary.json");
    f << summary.dump(2) << '\n';
  }
  return summary;
}

}  // namespace worldcloner
