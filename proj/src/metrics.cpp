#include "worldcloner/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "worldcloner/errors.hpp"

namespace worldcloner {

std::vector<double> moving_average(const std::vector<double>& values, int window) {
  if (window < 1) throw ConfigError("moving-average window must be at least 1");
  const std::size_t w = static_cast<std::size_t>(window);
  std::vector<double> out;
  if (values.size() < w) return out;
  out.reserve(values.size() - w + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i + 1 > w) sum -= values[i - w];
    if (i + 1 >= w) out.push_back(sum / static_cast<double>(window));
  }
  return out;
}

double asymptotic_performance(const std::vector<EpisodeRecord>& post_records, int tail_window) {
  if (tail_window < 1) throw ConfigError("tail window must be at least 1");
  const std::size_t w = static_cast<std::size_t>(tail_window);
  if (post_records.size() < w)
    throw InsufficientDataError("need " + std::to_string(tail_window) +
                                " post-novelty episodes, have " +
                                std::to_string(post_records.size()));
  double sum = 0.0;
  for (std::size_t i = post_records.size() - w; i < post_records.size(); ++i)
    sum += post_records[i].episode_return;
  return sum / static_cast<double>(tail_window);
}

AdaptiveEfficiency adaptive_efficiency(const std::vector<EpisodeRecord>& post_records,
                                       double asymptote, std::uint64_t injection_step,
                                       int window) {
  const double threshold =
      asymptote > 0.0 ? 0.95 * asymptote : asymptote + 0.05 * std::abs(asymptote);
  std::vector<double> returns;
  returns.reserve(post_records.size());
  for (const EpisodeRecord& r : post_records) returns.push_back(r.episode_return);
  const std::vector<double> ma = moving_average(returns, window);
  for (std::size_t j = 0; j < ma.size(); ++j) {
    if (ma[j] >= threshold) {
      const std::size_t pos = j + static_cast<std::size_t>(window) - 1;
      const EpisodeRecord& rec = post_records[pos];
      return AdaptiveEfficiency{rec.end_step - injection_step, rec.index, pos};
    }
  }
  return AdaptiveEfficiency{};
}

std::optional<std::uint64_t> update_efficiency(const std::vector<EpisodeRecord>& post_records,
                                               std::optional<std::size_t> record_position,
                                               std::uint64_t updates_at_injection) {
  if (!record_position) return std::nullopt;
  return post_records[*record_position].updates_at_end - updates_at_injection;
}

MetricReport compute_metrics(const std::vector<EpisodeRecord>& records,
                             std::uint64_t injection_step, std::uint64_t updates_at_injection,
                             std::optional<double> random_baseline, int ma_window,
                             int tail_window) {
  MetricReport report;

  std::vector<EpisodeRecord> pre, post;
  for (const EpisodeRecord& r : records) {
    if (injection_step > 0 && r.end_step > injection_step)
      post.push_back(r);
    else
      pre.push_back(r);
  }

  if (!pre.empty()) {
    const std::size_t w = std::min(pre.size(), static_cast<std::size_t>(tail_window));
    double sum = 0.0;
    for (std::size_t i = pre.size() - w; i < pre.size(); ++i) sum += pre[i].episode_return;
    report.pre_novelty_performance = sum / static_cast<double>(w);
  }

  if (injection_step == 0) return report;

  const double asymptote = asymptotic_performance(post, tail_window);
  report.asymptotic_adaptive_performance = asymptote;
  report.random_baseline_performance = random_baseline;

  const AdaptiveEfficiency eff =
      adaptive_efficiency(post, asymptote, injection_step, ma_window);
  report.adaptive_efficiency_steps = eff.steps;
  report.threshold_episode = eff.episode_index;
  report.update_efficiency_updates =
      update_efficiency(post, eff.record_position, updates_at_injection);

  report.failed_to_adapt =
      !eff.steps.has_value() || (random_baseline.has_value() && asymptote <= *random_baseline);
  return report;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["pre_novelty_performance"] = pre_novelty_performance;
  j["asymptotic_adaptive_performance"] =
      asymptotic_adaptive_performance ? nlohmann::json(*asymptotic_adaptive_performance)
                                      : nlohmann::json();
  j["random_baseline_performance"] = random_baseline_performance
                                         ? nlohmann::json(*random_baseline_performance)
                                         : nlohmann::json();
  j["adaptive_efficiency_steps"] =
      adaptive_efficiency_steps ? nlohmann::json(*adaptive_efficiency_steps) : nlohmann::json();
  j["update_efficiency_updates"] =
      update_efficiency_updates ? nlohmann::json(*update_efficiency_updates) : nlohmann::json();
  j["threshold_episode"] =
      threshold_episode ? nlohmann::json(*threshold_episode) : nlohmann::json();
  j["failed_to_adapt"] = failed_to_adapt;
  return j;
}

}  // namespace worldcloner
