#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>

#include "worldcloner/feature.hpp"
#include "worldcloner/rule_model.hpp"

namespace worldcloner {

enum class TriggerCondition { RuleViolations, StateFailures };

struct DetectionEvent {
  TriggerCondition condition = TriggerCondition::RuleViolations;
  std::int64_t rule_id = -1;  // -1 when the trigger had no matched rule
  int count = 0;     // counter value at the moment it fired
};

// Compares real transitions against a frozen world model and latches once
// prediction failures repeat: the same rule mispredicting `threshold` times
// in a row, or the same exact state producing a failed prediction on more
// than `threshold` consecutive visits. A correct prediction clears the
// counters of the rule that made it and of the state it was made from, so
// isolated misses never fire. Unknown predictions (no covering rule) count
// toward the state condition only.
class NoveltyDetector {
 public:
  explicit NoveltyDetector(int threshold = 2);

  // One real step: the model's prediction for (prev, action) against what the
  // environment actually did. Returns an event when a trigger fires.
  std::optional<DetectionEvent> observe(const std::optional<Prediction>& prediction,
                                        const SymbolicState& prev,
                                        const SymbolicState& actual_next, double actual_reward,
                                        bool actual_terminal);

  bool fired() const { return fired_; }
  std::uint64_t detections() const { return detections_; }

  // Clears counters and the latch; equivalent to a fresh detector.
  void reset();

  int threshold() const { return threshold_; }
  int rule_failures(std::int64_t rule_id) const;
  int state_failures(const StateKey& key) const;

 private:
  int threshold_;
  bool fired_ = false;
  std::uint64_t detections_ = 0;
  std::unordered_map<std::int64_t, int> rule_fail_;
  std::unordered_map<StateKey, int> state_fail_;
};

}  // namespace worldcloner
