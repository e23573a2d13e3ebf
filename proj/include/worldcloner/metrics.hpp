#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace worldcloner {

struct EpisodeRecord {
  std::uint64_t index = 0;     // 0-based, monotone within a run
  std::uint64_t end_step = 0;  // global real environment steps at episode end
  double episode_return = 0.0;
  std::uint64_t length = 0;
  std::string phase;                 // "pre" | "monitor" | "post"
  std::uint64_t updates_at_end = 0;  // policy updates_count at episode end
};

struct MetricReport {
  double pre_novelty_performance = 0.0;
  std::optional<double> asymptotic_adaptive_performance;
  std::optional<double> random_baseline_performance;
  std::optional<std::uint64_t> adaptive_efficiency_steps;
  std::optional<std::uint64_t> update_efficiency_updates;
  std::optional<std::uint64_t> threshold_episode;  // run-level episode index
  bool failed_to_adapt = false;

  nlohmann::json to_json() const;
};

// Trailing mean over the last `window` entries; output entry j covers input
// indices [j, j + window). Inputs shorter than the window give an empty
// result; window 1 is the identity.
std::vector<double> moving_average(const std::vector<double>& values, int window = 10);

// Mean return of the final tail_window records. Raises InsufficientDataError
// with fewer records than the window.
double asymptotic_performance(const std::vector<EpisodeRecord>& post_records,
                              int tail_window = 100);

struct AdaptiveEfficiency {
  std::optional<std::uint64_t> steps;          // real steps from injection to threshold
  std::optional<std::uint64_t> episode_index;  // run-level index of the crossing episode
  std::optional<std::size_t> record_position;  // position within post_records
};

// First post-novelty episode whose `window`-episode moving-average return
// reaches the 95% bar: 0.95 * asymptote for positive asymptotes, otherwise
// asymptote + 0.05 * |asymptote|. Empty optionals when never reached.
AdaptiveEfficiency adaptive_efficiency(const std::vector<EpisodeRecord>& post_records,
                                       double asymptote, std::uint64_t injection_step,
                                       int window = 10);

// Policy updates spent from injection through the crossing episode.
std::optional<std::uint64_t> update_efficiency(const std::vector<EpisodeRecord>& post_records,
                                               std::optional<std::size_t> record_position,
                                               std::uint64_t updates_at_injection);

// Assembles the full report from one run's episode log. injection_step 0
// means no novelty was injected; post metrics stay empty. random_baseline is
// the measured uniform-random-policy mean return on the post-novelty
// environment (empty when not applicable).
MetricReport compute_metrics(const std::vector<EpisodeRecord>& records,
                             std::uint64_t injection_step, std::uint64_t updates_at_injection,
                             std::optional<double> random_baseline, int ma_window = 10,
                             int tail_window = 100);

}  // namespace worldcloner
