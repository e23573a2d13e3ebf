#include "worldcloner/rule_model.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <string>

namespace worldcloner {

namespace {

void check_box_shape(const FeatureSchema& schema, const AABI& box) {
  if (box.lo.size() != schema.int_axis_count() || box.hi.size() != schema.int_axis_count() ||
      box.sets.size() != schema.categorical_count())
    throw SchemaError("AABI shape does not match schema");
}

void check_state(const FeatureSchema& schema, const SymbolicState& s) {
  if (!compatible(schema, s.schema())) throw SchemaError("state schema mismatch");
}

// Flattened integer-axis view of a state, aligned with AABI::lo/hi.
std::int32_t state_axis_value(const FeatureSchema& schema, const SymbolicState& s,
                              std::size_t f, std::size_t a) {
  return s.data()[schema.data_offset(f) + a];
}

}  // namespace

// --- AABI operations -------------------------------------------------------

bool contains_point(const FeatureSchema& schema, const AABI& box, const SymbolicState& s) {
  check_box_shape(schema, box);
  check_state(schema, s);
  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    const FeatureSpec& spec = schema.feature(f);
    if (spec.kind == FeatureKind::IntegerInterval) {
      const std::size_t axis0 = schema.axis_offset(f);
      for (std::size_t a = 0; a < spec.lo.size(); ++a) {
        const std::int32_t v = state_axis_value(schema, s, f, a);
        if (v < box.lo[axis0 + a] || v > box.hi[axis0 + a]) return false;
      }
    } else {
      const std::int32_t sym = s.data()[schema.data_offset(f)];
      if (!(box.sets[schema.cat_index(f)] & (std::uint64_t{1} << sym))) return false;
    }
  }
  return true;
}

bool intervals_overlap(const FeatureSchema& schema, const AABI& a, const AABI& b) {
  check_box_shape(schema, a);
  check_box_shape(schema, b);
  for (std::size_t i = 0; i < a.lo.size(); ++i)
    if (a.lo[i] > b.hi[i] || b.lo[i] > a.hi[i]) return false;
  for (std::size_t c = 0; c < a.sets.size(); ++c)
    if ((a.sets[c] & b.sets[c]) == 0) return false;
  return true;
}

bool contains_aabi(const FeatureSchema& schema, const AABI& outer, const AABI& inner) {
  check_box_shape(schema, outer);
  check_box_shape(schema, inner);
  for (std::size_t i = 0; i < outer.lo.size(); ++i)
    if (inner.lo[i] < outer.lo[i] || inner.hi[i] > outer.hi[i]) return false;
  for (std::size_t c = 0; c < outer.sets.size(); ++c)
    if (inner.sets[c] & ~outer.sets[c]) return false;
  return true;
}

AABI point_aabi(const SymbolicState& s) {
  const FeatureSchema& schema = s.schema();
  AABI box;
  box.lo.reserve(schema.int_axis_count());
  box.hi.reserve(schema.int_axis_count());
  box.sets.reserve(schema.categorical_count());
  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    const FeatureSpec& spec = schema.feature(f);
    if (spec.kind == FeatureKind::IntegerInterval) {
      for (std::size_t a = 0; a < spec.lo.size(); ++a) {
        const std::int32_t v = state_axis_value(schema, s, f, a);
        box.lo.push_back(v);
        box.hi.push_back(v);
      }
    } else {
      box.sets.push_back(std::uint64_t{1} << s.data()[schema.data_offset(f)]);
    }
  }
  return box;
}

AABI relax_interval(const FeatureSchema& schema, const AABI& box, const SymbolicState& s) {
  check_box_shape(schema, box);
  check_state(schema, s);
  AABI out = box;
  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    const FeatureSpec& spec = schema.feature(f);
    if (spec.kind == FeatureKind::IntegerInterval) {
      const std::size_t axis0 = schema.axis_offset(f);
      for (std::size_t a = 0; a < spec.lo.size(); ++a) {
        const std::int32_t v = state_axis_value(schema, s, f, a);
        out.lo[axis0 + a] = std::min(out.lo[axis0 + a], v);
        out.hi[axis0 + a] = std::max(out.hi[axis0 + a], v);
      }
    } else {
      out.sets[schema.cat_index(f)] |= std::uint64_t{1} << s.data()[schema.data_offset(f)];
    }
  }
  return out;
}

std::pair<std::optional<AABI>, std::optional<AABI>> split_interval(const FeatureSchema& schema,
                                                                   const AABI& box,
                                                                   const SymbolicState& s) {
  check_box_shape(schema, box);
  if (schema.int_axis_count() == 0)
    throw ContractError("split_interval needs at least one integer axis");
  if (!contains_point(schema, box, s))
    throw ContractError("split_interval: box does not contain the state");

  // Largest extent wins; scanning in flattened order makes ties fall to the
  // lowest feature index, then the lowest axis index within the feature.
  std::size_t best_axis = 0;
  std::int64_t best_extent = -1;
  for (std::size_t i = 0; i < box.lo.size(); ++i) {
    const std::int64_t extent = std::int64_t{box.hi[i]} - box.lo[i];
    if (extent > best_extent) {
      best_extent = extent;
      best_axis = i;
    }
  }

  std::int32_t v = 0;
  for (std::size_t f = 0, seen = 0; f < schema.feature_count(); ++f) {
    const FeatureSpec& spec = schema.feature(f);
    if (spec.kind != FeatureKind::IntegerInterval) continue;
    if (best_axis < seen + spec.lo.size()) {
      v = state_axis_value(schema, s, f, best_axis - seen);
      break;
    }
    seen += spec.lo.size();
  }

  std::optional<AABI> lower, upper;
  if (v - 1 >= box.lo[best_axis]) {
    AABI half = box;
    half.hi[best_axis] = v - 1;
    lower = std::move(half);
  }
  if (v + 1 <= box.hi[best_axis]) {
    AABI half = box;
    half.lo[best_axis] = v + 1;
    upper = std::move(half);
  }
  return {std::move(lower), std::move(upper)};
}

double aabi_volume(const FeatureSchema& schema, const AABI& box) {
  check_box_shape(schema, box);
  double vol = 1.0;
  for (std::size_t i = 0; i < box.lo.size(); ++i)
    vol *= static_cast<double>(std::int64_t{box.hi[i]} - box.lo[i] + 1);
  for (std::uint64_t set : box.sets) vol *= static_cast<double>(std::popcount(set));
  return vol;
}

// --- RuleModel -------------------------------------------------------------

RuleModel::RuleModel(SchemaPtr schema, int action_count)
    : schema_(std::move(schema)), action_count_(action_count) {
  if (!schema_) throw SchemaError("rule model needs a schema");
  if (action_count_ <= 0) throw ConfigError("rule model needs a positive action count");
  by_action_.resize(static_cast<std::size_t>(action_count_));
}

void RuleModel::validate_state(const SymbolicState& s) const {
  if (!compatible(*schema_, s.schema())) throw SchemaError("state schema mismatch");
}

void RuleModel::rebuild_index() {
  for (auto& bucket : by_action_) bucket.clear();
  for (std::size_t i = 0; i < rules_.size(); ++i)
    by_action_[static_cast<std::size_t>(rules_[i].action)].push_back(i);
}

const Rule* RuleModel::find_covering(const SymbolicState& s, int action,
                                     std::vector<std::size_t>* out_indices) const {
  const Rule* first = nullptr;
  for (std::size_t idx : by_action_[static_cast<std::size_t>(action)]) {
    const Rule& rule = rules_[idx];
    for (const AABI& box : rule.preconditions) {
      if (contains_point(*schema_, box, s)) {
        if (!first) first = &rule;
        if (out_indices) out_indices->push_back(idx);
        break;
      }
    }
  }
  return first;
}

std::optional<Prediction> RuleModel::predict(const SymbolicState& s, int action) const {
  validate_state(s);
  if (action < 0 || action >= action_count_) throw DomainError("action out of range");

  std::vector<std::size_t> matches;
  const Rule* first = find_covering(s, action, &matches);
  if (!first) return std::nullopt;

  for (std::size_t idx : matches)
    if (rules_[idx].effect != first->effect)
      throw InvariantViolation("two covering rules disagree on the effect");

  return Prediction{apply_delta(s, first->effect.delta), first->effect.reward,
                    first->effect.terminal, first->id};
}

std::int64_t RuleModel::create_point_rule(const SymbolicState& prev, int action, Effect effect) {
  Rule rule;
  rule.id = next_id_++;
  rule.action = action;
  rule.preconditions.push_back(point_aabi(prev));
  rule.effect = std::move(effect);
  rules_.push_back(std::move(rule));
  by_action_[static_cast<std::size_t>(action)].push_back(rules_.size() - 1);
  return rules_.back().id;
}

void RuleModel::split_about(std::size_t rule_idx, std::size_t box_idx, const SymbolicState& prev) {
  Rule& rule = rules_[rule_idx];
  if (schema_->int_axis_count() > 0) {
    auto [lower, upper] = split_interval(*schema_, rule.preconditions[box_idx], prev);
    rule.preconditions.erase(rule.preconditions.begin() + static_cast<std::ptrdiff_t>(box_idx));
    auto at = rule.preconditions.begin() + static_cast<std::ptrdiff_t>(box_idx);
    if (upper) at = rule.preconditions.insert(at, std::move(*upper));
    if (lower) rule.preconditions.insert(at, std::move(*lower));
  } else {
    // No integer axis to cut: drop the state's symbol from the categorical
    // set with the largest cardinality (ties to the lowest feature index).
    AABI& box = rule.preconditions[box_idx];
    std::size_t best_cat = 0;
    int best_count = -1;
    std::size_t best_feature_data_off = 0;
    for (std::size_t f = 0; f < schema_->feature_count(); ++f) {
      if (schema_->feature(f).kind != FeatureKind::Categorical) continue;
      const std::size_t c = schema_->cat_index(f);
      const int count = std::popcount(box.sets[c]);
      if (count > best_count) {
        best_count = count;
        best_cat = c;
        best_feature_data_off = schema_->data_offset(f);
      }
    }
    box.sets[best_cat] &= ~(std::uint64_t{1} << prev.data()[best_feature_data_off]);
    if (box.sets[best_cat] == 0)
      rule.preconditions.erase(rule.preconditions.begin() + static_cast<std::ptrdiff_t>(box_idx));
  }
}

UpdateOutcome RuleModel::update(const SymbolicState& prev, int action, const SymbolicState& next,
                                double reward, bool terminal) {
  validate_state(prev);
  validate_state(next);
  if (action < 0 || action >= action_count_) throw DomainError("action out of range");

  Effect observed{diff(prev, next), reward, terminal};

  // Rules whose precondition covers prev, with the covering box index.
  std::vector<std::pair<std::size_t, std::size_t>> covering;
  for (std::size_t idx : by_action_[static_cast<std::size_t>(action)]) {
    const Rule& rule = rules_[idx];
    for (std::size_t b = 0; b < rule.preconditions.size(); ++b) {
      if (contains_point(*schema_, rule.preconditions[b], prev)) {
        covering.emplace_back(idx, b);
        break;
      }
    }
  }

  // Case: already covered with the observed effect.
  for (const auto& [idx, b] : covering) {
    if (rules_[idx].effect == observed) {
      rules_[idx].hits += 1;
      return UpdateOutcome{UpdateKind::NoChange, rules_[idx].id, -1};
    }
  }

  // Case: covered, but the covering rule(s) predict something else. Cut prev
  // out of every covering rule, then record the observation as a point rule.
  if (!covering.empty()) {
    const std::int64_t split_id = rules_[covering.front().first].id;
    bool erased_any = false;
    for (const auto& [idx, b] : covering) {
      rules_[idx].violations += 1;
      split_about(idx, b, prev);
      if (rules_[idx].preconditions.empty()) erased_any = true;
    }
    if (erased_any) {
      std::erase_if(rules_, [](const Rule& r) { return r.preconditions.empty(); });
      rebuild_index();
    }
    const std::int64_t new_id = create_point_rule(prev, action, std::move(observed));
    return UpdateOutcome{UpdateKind::SplitAndCreated, split_id, new_id};
  }

  // Case: not covered, but a same-effect rule exists. Widen the box whose
  // relaxation costs the least volume (ties: lowest rule id, then box index).
  std::size_t best_rule = 0, best_box = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t idx : by_action_[static_cast<std::size_t>(action)]) {
    const Rule& rule = rules_[idx];
    if (rule.effect != observed) continue;
    for (std::size_t b = 0; b < rule.preconditions.size(); ++b) {
      const AABI& box = rule.preconditions[b];
      const double cost =
          aabi_volume(*schema_, relax_interval(*schema_, box, prev)) - aabi_volume(*schema_, box);
      if (!found || cost < best_cost) {
        found = true;
        best_cost = cost;
        best_rule = idx;
        best_box = b;
      }
    }
  }

  if (found) {
    Rule& rule = rules_[best_rule];
    AABI relaxed = relax_interval(*schema_, rule.preconditions[best_box], prev);

    // The widened box must not touch a different-effect rule for this action.
    bool collides = false;
    for (std::size_t idx : by_action_[static_cast<std::size_t>(action)]) {
      if (collides) break;
      const Rule& other = rules_[idx];
      if (other.effect == observed) continue;
      for (const AABI& box : other.preconditions) {
        if (intervals_overlap(*schema_, relaxed, box)) {
          collides = true;
          break;
        }
      }
    }

    // Nor may it partially overlap a sibling box of its own rule; siblings it
    // swallows whole are simply absorbed.
    std::vector<std::size_t> absorbed;
    if (!collides) {
      for (std::size_t b = 0; b < rule.preconditions.size(); ++b) {
        if (b == best_box) continue;
        if (contains_aabi(*schema_, relaxed, rule.preconditions[b]))
          absorbed.push_back(b);
        else if (intervals_overlap(*schema_, relaxed, rule.preconditions[b])) {
          collides = true;
          break;
        }
      }
    }

    if (collides) {
      rule.preconditions.push_back(point_aabi(prev));
    } else {
      rule.preconditions[best_box] = std::move(relaxed);
      for (auto it = absorbed.rbegin(); it != absorbed.rend(); ++it)
        rule.preconditions.erase(rule.preconditions.begin() + static_cast<std::ptrdiff_t>(*it));
    }
    return UpdateOutcome{UpdateKind::Relaxed, rule.id, -1};
  }

  // Case: first sighting of this (precondition, action, effect) family.
  const std::int64_t new_id = create_point_rule(prev, action, std::move(observed));
  return UpdateOutcome{UpdateKind::Created, -1, new_id};
}

void RuleModel::check_invariants() const {
  for (const Rule& rule : rules_) {
    if (rule.preconditions.empty())
      throw InvariantViolation("rule " + std::to_string(rule.id) + " has no preconditions");
    if (rule.action < 0 || rule.action >= action_count_)
      throw InvariantViolation("rule " + std::to_string(rule.id) + " action out of range");
    for (const AABI& box : rule.preconditions) {
      check_box_shape(*schema_, box);
      for (std::size_t i = 0; i < box.lo.size(); ++i)
        if (box.lo[i] > box.hi[i])
          throw InvariantViolation("rule " + std::to_string(rule.id) + " has an empty axis");
      for (std::uint64_t set : box.sets)
        if (set == 0)
          throw InvariantViolation("rule " + std::to_string(rule.id) + " has an empty symbol set");
    }
    for (std::size_t i = 0; i < rule.preconditions.size(); ++i)
      for (std::size_t j = i + 1; j < rule.preconditions.size(); ++j)
        if (intervals_overlap(*schema_, rule.preconditions[i], rule.preconditions[j]))
          throw InvariantViolation("rule " + std::to_string(rule.id) +
                                   " has overlapping precondition boxes");
  }
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    for (std::size_t j = i + 1; j < rules_.size(); ++j) {
      const Rule& a = rules_[i];
      const Rule& b = rules_[j];
      if (a.action != b.action || a.effect == b.effect) continue;
      for (const AABI& ba : a.preconditions)
        for (const AABI& bb : b.preconditions)
          if (intervals_overlap(*schema_, ba, bb))
            throw InvariantViolation("collision-freedom violated between rules " +
                                     std::to_string(a.id) + " and " + std::to_string(b.id));
    }
  }
}

// --- serialization ---------------------------------------------------------

namespace {

nlohmann::json box_to_json(const FeatureSchema& schema, const AABI& box) {
  nlohmann::json j;
  j["lo"] = box.lo;
  j["hi"] = box.hi;
  nlohmann::json sets = nlohmann::json::array();
  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    const FeatureSpec& spec = schema.feature(f);
    if (spec.kind != FeatureKind::Categorical) continue;
    nlohmann::json names = nlohmann::json::array();
    const std::uint64_t set = box.sets[schema.cat_index(f)];
    for (std::size_t i = 0; i < spec.symbols.size(); ++i)
      if (set & (std::uint64_t{1} << i)) names.push_back(spec.symbols[i]);
    sets.push_back(std::move(names));
  }
  j["sets"] = std::move(sets);
  return j;
}

AABI box_from_json(const FeatureSchema& schema, const nlohmann::json& j) {
  AABI box;
  box.lo = j.at("lo").get<std::vector<std::int32_t>>();
  box.hi = j.at("hi").get<std::vector<std::int32_t>>();
  const auto& sets = j.at("sets");
  std::size_t c = 0;
  box.sets.assign(schema.categorical_count(), 0);
  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    const FeatureSpec& spec = schema.feature(f);
    if (spec.kind != FeatureKind::Categorical) continue;
    for (const auto& name : sets.at(c))
      box.sets[c] |= std::uint64_t{1} << schema.symbol_id(f, name.get<std::string>());
    ++c;
  }
  return box;
}

}  // namespace

nlohmann::json RuleModel::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["schema"] = schema_->to_json();
  j["action_count"] = action_count_;
  j["next_id"] = next_id_;
  nlohmann::json rules = nlohmann::json::array();
  for (const Rule& rule : rules_) {
    nlohmann::json r;
    r["id"] = rule.id;
    r["action"] = rule.action;
    nlohmann::json boxes = nlohmann::json::array();
    for (const AABI& box : rule.preconditions) boxes.push_back(box_to_json(*schema_, box));
    r["preconditions"] = std::move(boxes);
    r["effect"] = nlohmann::json{{"delta", rule.effect.delta.to_json(*schema_)},
                                 {"reward", rule.effect.reward},
                                 {"terminal", rule.effect.terminal}};
    r["stats"] = nlohmann::json{{"hits", rule.hits}, {"violations", rule.violations}};
    rules.push_back(std::move(r));
  }
  j["rules"] = std::move(rules);
  return j;
}

RuleModel RuleModel::from_json(const nlohmann::json& j) {
  auto schema = FeatureSchema::from_json(j.at("schema"));
  RuleModel model(schema, j.at("action_count").get<int>());
  model.next_id_ = j.at("next_id").get<std::int64_t>();
  for (const auto& r : j.at("rules")) {
    Rule rule;
    rule.id = r.at("id").get<std::int64_t>();
    rule.action = r.at("action").get<int>();
    for (const auto& b : r.at("preconditions"))
      rule.preconditions.push_back(box_from_json(*schema, b));
    rule.effect.delta = StateDelta::from_json(r.at("effect").at("delta"), *schema);
    rule.effect.reward = r.at("effect").at("reward").get<double>();
    rule.effect.terminal = r.at("effect").at("terminal").get<bool>();
    rule.hits = r.at("stats").at("hits").get<std::uint64_t>();
    rule.violations = r.at("stats").at("violations").get<std::uint64_t>();
    model.rules_.push_back(std::move(rule));
  }
  model.rebuild_index();
  return model;
}

}  // namespace worldcloner
