#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "worldcloner/adaptation.hpp"
#include "worldcloner/grid_env.hpp"
#include "worldcloner/metrics.hpp"

namespace worldcloner {

enum class AgentKind { WorldCloner, Baseline };
const char* agent_name(AgentKind k);
std::optional<AgentKind> agent_from_name(std::string_view name);

struct ExperimentConfig {
  EnvName env = EnvName::DoorKey;
  NoveltySpec novelty{NoveltyKind::None, 60000, false};
  AgentKind agent = AgentKind::WorldCloner;
  int seeds = 1;
  std::uint64_t base_seed = 1;
  AdaptationConfig adaptation;  // mix_real_fraction carries --mix-ratio
  int ma_window = 10;
  int tail_window = 100;
  int random_baseline_episodes = 100;
  std::string out_dir;  // empty: nothing written
  bool strict = false;
  bool render = false;

  // The resolved configuration, as echoed into every output file. out_dir is
  // excluded so runs written to different places stay comparable.
  nlohmann::json to_json() const;
};

// Tuned defaults for the desk-scale experiments (slow exploration decay and
// a strict model probe; library type defaults stay conservative).
ExperimentConfig default_experiment_config();

struct RunResult {
  std::uint64_t seed = 0;
  PhaseReport pre, monitor, post;
  std::uint64_t injection_step = 0;
  std::uint64_t detection_step = 0;
  std::uint64_t updates_at_injection = 0;
  std::vector<EpisodeRecord> episodes;
  MetricReport metrics;
  std::size_t rule_count = 0;

  nlohmann::json to_json() const;
};

// Mean return of a uniform-random policy on the post-novelty environment.
double random_policy_performance(EnvName env, NoveltySpec novelty, std::uint64_t seed,
                                 int episodes);

// One seed end-to-end; streams the per-step log to events_csv when non-null.
RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed,
                     std::ostream* events_csv);

// Runs the seed matrix sequentially; writes per-run artifacts (events.csv,
// episodes.csv, metrics.json) plus summary.json when out_dir is set. Returns
// the summary document.
nlohmann::json run_matrix(const ExperimentConfig& cfg);

void write_events_header(std::ostream& out);
StepSink make_csv_sink(std::ostream& out);
void write_episodes_csv(std::ostream& out, const std::vector<EpisodeRecord>& episodes,
                        int ma_window);

}  // namespace worldcloner
