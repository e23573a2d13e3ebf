#include "worldcloner/novelty_detector.hpp"

#include "worldcloner/errors.hpp"

namespace worldcloner {

NoveltyDetector::NoveltyDetector(int threshold) : threshold_(threshold) {
  if (threshold < 1) throw ConfigError("detector threshold must be at least 1");
}

std::optional<DetectionEvent> NoveltyDetector::observe(
    const std::optional<Prediction>& prediction, const SymbolicState& prev,
    const SymbolicState& actual_next, double actual_reward, bool actual_terminal) {
  StateKey key = prev.key();
  if (prediction) {
    const bool match = prediction->reward == actual_reward &&
                       prediction->terminal == actual_terminal &&
                       prediction->next == actual_next;
    if (match) {
      rule_fail_.erase(prediction->rule_id);
      state_fail_.erase(key);
      return std::nullopt;
    }
    const int rf = ++rule_fail_[prediction->rule_id];
    const int sf = ++state_fail_[std::move(key)];
    std::optional<DetectionEvent> event;
    if (rf >= threshold_) {
      event = DetectionEvent{TriggerCondition::RuleViolations, prediction->rule_id, rf};
    } else if (sf > threshold_) {
      event = DetectionEvent{TriggerCondition::StateFailures, prediction->rule_id, sf};
    }
    if (event) {
      fired_ = true;
      ++detections_;
    }
    return event;
  }

  const int sf = ++state_fail_[std::move(key)];
  if (sf > threshold_) {
    fired_ = true;
    ++detections_;
    return DetectionEvent{TriggerCondition::StateFailures, -1, sf};
  }
  return std::nullopt;
}

void NoveltyDetector::reset() {
  fired_ = false;
  detections_ = 0;
  rule_fail_.clear();
  state_fail_.clear();
}

int NoveltyDetector::rule_failures(std::int64_t rule_id) const {
  const auto it = rule_fail_.find(rule_id);
  return it == rule_fail_.end() ? 0 : it->second;
}

int NoveltyDetector::state_failures(const StateKey& key) const {
  const auto it = state_fail_.find(key);
  return it == state_fail_.end() ? 0 : it->second;
}

}  // namespace worldcloner
