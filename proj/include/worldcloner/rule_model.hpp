#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "worldcloner/feature.hpp"

namespace worldcloner {

// ---------------------------------------------------------------------------
// Axis-aligned bounding intervals
// ---------------------------------------------------------------------------

// One box over the schema's feature space: inclusive [lo, hi] bounds per
// integer axis (flattened across interval features, schema order) and one
// non-empty symbol bitmask per categorical feature.
struct AABI {
  std::vector<std::int32_t> lo, hi;
  std::vector<std::uint64_t> sets;

  bool operator==(const AABI&) const = default;
};

// Point membership: separating-axis test, outside as soon as one axis value
// falls below lo or above hi, or one categorical symbol is not in its set.
bool contains_point(const FeatureSchema& schema, const AABI& box, const SymbolicState& s);

// Non-empty intersection test between two boxes.
bool intervals_overlap(const FeatureSchema& schema, const AABI& a, const AABI& b);

// True when inner lies entirely within outer.
bool contains_aabi(const FeatureSchema& schema, const AABI& outer, const AABI& inner);

// Degenerate box holding exactly one state.
AABI point_aabi(const SymbolicState& s);

// Smallest box covering both the input box and the state: componentwise
// min/max on integer axes, set union on categorical features.
AABI relax_interval(const FeatureSchema& schema, const AABI& box, const SymbolicState& s);

// Splits a box about a contained state along one integer axis, excluding the
// state's slab on that axis: lower keeps [lo, v-1], upper keeps [v+1, hi].
// The axis is the one with the largest extent (hi - lo), ties resolved to the
// lowest feature then axis index. Empty halves come back as nullopt; a point
// box yields (nullopt, nullopt). Requires at least one integer axis and that
// the box contains the state (ContractError otherwise).
std::pair<std::optional<AABI>, std::optional<AABI>> split_interval(const FeatureSchema& schema,
                                                                   const AABI& box,
                                                                   const SymbolicState& s);

// Number of states the box covers, as a double (exact for desk-scale boxes).
double aabi_volume(const FeatureSchema& schema, const AABI& box);

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

// What a transition does: a state delta plus the observed reward and terminal
// flag. Two effects are equal only if all three agree; a reward or terminal
// mismatch is a different effect even under an identical delta.
struct Effect {
  StateDelta delta;
  double reward = 0.0;
  bool terminal = false;

  bool operator==(const Effect& o) const {
    return reward == o.reward && terminal == o.terminal && delta == o.delta;
  }
  bool operator!=(const Effect& o) const { return !(*this == o); }
};

struct Rule {
  std::int64_t id = 0;
  int action = 0;
  std::vector<AABI> preconditions;  // pairwise disjoint, non-empty
  Effect effect;
  std::uint64_t hits = 0;        // confirmations (observed transition already covered)
  std::uint64_t violations = 0;  // collisions (rule covered a state whose effect differed)
};

struct Prediction {
  SymbolicState next;
  double reward = 0.0;
  bool terminal = false;
  std::int64_t rule_id = 0;
};

enum class UpdateKind { NoChange, Relaxed, SplitAndCreated, Created };

struct UpdateOutcome {
  UpdateKind kind = UpdateKind::NoChange;
  std::int64_t rule_id = -1;      // rule confirmed / relaxed / split
  std::int64_t new_rule_id = -1;  // rule created (SplitAndCreated, Created)
};

// ---------------------------------------------------------------------------
// Rule model
// ---------------------------------------------------------------------------

// Online learned transition model: a list of rules, each mapping a state
// precondition (disjoint AABIs) plus an action to an effect. Maintains
// collision-freedom: rules sharing an action but differing in effect never
// overlap, so prediction is unambiguous. Updates look only at the single
// observed transition, never at history.
class RuleModel {
 public:
  RuleModel(SchemaPtr schema, int action_count);

  // Folds one observed transition into the model. Exactly one of the four
  // outcome kinds applies:
  //  - NoChange: a covering rule already predicts the observed effect.
  //  - Relaxed: a same-effect rule was widened to cover prev (or, when
  //    widening would collide with a different-effect rule or a sibling box,
  //    got a point box appended instead).
  //  - SplitAndCreated: a covering rule predicted a different effect; its
  //    covering box is split to exclude prev and a point rule is created.
  //  - Created: nothing matched; a fresh point rule is created.
  // Afterwards predict(prev, action) reproduces (next, reward, terminal).
  UpdateOutcome update(const SymbolicState& prev, int action, const SymbolicState& next,
                       double reward, bool terminal);

  // Unique prediction for (state, action), or nullopt when no rule covers the
  // state (Unknown). Ties between identical-effect rules go to the lowest
  // rule id. Two covering rules with different effects would contradict
  // collision-freedom and raise InvariantViolation.
  std::optional<Prediction> predict(const SymbolicState& s, int action) const;

  const std::vector<Rule>& rules() const { return rules_; }
  std::size_t rule_count() const { return rules_.size(); }
  int action_count() const { return action_count_; }
  const SchemaPtr& schema_ptr() const { return schema_; }

  // Full invariant sweep (shape, rule-local disjointness, collision-freedom).
  // Test support; raises InvariantViolation on the first failure.
  void check_invariants() const;

  // Lossless round trip, embedding the schema.
  nlohmann::json to_json() const;
  static RuleModel from_json(const nlohmann::json& j);

 private:
  const Rule* find_covering(const SymbolicState& s, int action,
                            std::vector<std::size_t>* out_indices) const;
  std::int64_t create_point_rule(const SymbolicState& prev, int action, Effect effect);
  void split_about(std::size_t rule_idx, std::size_t box_idx, const SymbolicState& prev);
  void rebuild_index();
  void validate_state(const SymbolicState& s) const;

  SchemaPtr schema_;
  int action_count_ = 0;
  std::int64_t next_id_ = 1;
  std::vector<Rule> rules_;                         // ascending id
  std::vector<std::vector<std::size_t>> by_action_; // rule indices per action
};

}  // namespace worldcloner
