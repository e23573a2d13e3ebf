#include <doctest.h>

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "support.hpp"
#include "worldcloner/errors.hpp"
#include "worldcloner/feature.hpp"
#include "worldcloner/rule_model.hpp"

using namespace worldcloner;
using testsupport::all_states;

namespace {

SchemaPtr grid8() {
  return std::make_shared<const FeatureSchema>(std::vector<FeatureSpec>{
      FeatureSpec::interval("Loc", {1, 1}, {8, 8})});
}

SchemaPtr row8() {
  return std::make_shared<const FeatureSchema>(
      std::vector<FeatureSpec>{FeatureSpec::interval("Row", {1}, {8})});
}

SymbolicState at(const SchemaPtr& s, std::vector<std::int32_t> data) {
  return SymbolicState(s, std::move(data));
}

AABI box2(std::vector<std::int32_t> lo, std::vector<std::int32_t> hi) {
  return AABI{std::move(lo), std::move(hi), {}};
}

// Set of key bytes for every domain point inside the box.
std::set<std::string> point_set(const SchemaPtr& schema, const AABI& box,
                                const std::vector<SymbolicState>& domain) {
  std::set<std::string> out;
  for (const SymbolicState& s : domain)
    if (contains_point(*schema, box, s)) out.insert(s.key().bytes);
  return out;
}

// Random sub-box of the schema's domain: per-axis [lo', hi'] and per
// categorical feature a non-empty symbol subset.
AABI random_box(const SchemaPtr& schema, Rng& rng) {
  AABI box;
  for (std::size_t f = 0; f < schema->feature_count(); ++f) {
    const FeatureSpec& spec = schema->feature(f);
    if (spec.kind == FeatureKind::IntegerInterval) {
      for (std::size_t a = 0; a < spec.lo.size(); ++a) {
        const std::uint64_t span = static_cast<std::uint64_t>(spec.hi[a] - spec.lo[a]) + 1;
        std::int32_t x = spec.lo[a] + static_cast<std::int32_t>(next_below(rng, span));
        std::int32_t y = spec.lo[a] + static_cast<std::int32_t>(next_below(rng, span));
        box.lo.push_back(std::min(x, y));
        box.hi.push_back(std::max(x, y));
      }
    } else {
      const std::uint64_t full = (spec.symbols.size() == 64)
                                     ? ~std::uint64_t{0}
                                     : (std::uint64_t{1} << spec.symbols.size()) - 1;
      std::uint64_t set = 0;
      while (set == 0) set = next_below(rng, full) + 1;
      box.sets.push_back(set & full);
    }
  }
  return box;
}

}  // namespace

TEST_SUITE("rule_model") {

TEST_CASE("containment tests each axis and symbol set") {
  SchemaPtr s = grid8();
  const AABI box = box2({1, 1}, {5, 2});
  CHECK(contains_point(*s, box, at(s, {3, 2})));
  CHECK(contains_point(*s, box, at(s, {1, 1})));
  CHECK(contains_point(*s, box, at(s, {5, 2})));
  CHECK_FALSE(contains_point(*s, box, at(s, {3, 4})));
  CHECK_FALSE(contains_point(*s, box, at(s, {6, 1})));

  SchemaPtr cat = std::make_shared<const FeatureSchema>(std::vector<FeatureSpec>{
      FeatureSpec::interval("Row", {1}, {4}),
      FeatureSpec::categorical("Mode", {"a", "b", "c"})});
  const AABI mixed{{2}, {3}, {0b101}};  // Mode in {a, c}
  CHECK(contains_point(*cat, mixed, SymbolicState(cat, {2, 0})));
  CHECK(contains_point(*cat, mixed, SymbolicState(cat, {3, 2})));
  CHECK_FALSE(contains_point(*cat, mixed, SymbolicState(cat, {2, 1})));
  CHECK_FALSE(contains_point(*cat, mixed, SymbolicState(cat, {4, 0})));
}

TEST_CASE("overlap and enclosure goldens") {
  SchemaPtr s = grid8();
  CHECK(intervals_overlap(*s, box2({1, 1}, {4, 4}), box2({4, 4}, {8, 8})));
  CHECK_FALSE(intervals_overlap(*s, box2({1, 1}, {4, 4}), box2({5, 1}, {8, 8})));
  CHECK_FALSE(intervals_overlap(*s, box2({1, 1}, {4, 4}), box2({1, 5}, {4, 8})));
  CHECK(contains_aabi(*s, box2({1, 1}, {8, 8}), box2({2, 2}, {3, 3})));
  CHECK(contains_aabi(*s, box2({2, 2}, {3, 3}), box2({2, 2}, {3, 3})));
  CHECK_FALSE(contains_aabi(*s, box2({2, 2}, {3, 3}), box2({2, 2}, {3, 4})));
}

TEST_CASE("relaxation is the componentwise hull") {
  SchemaPtr s = grid8();
  const AABI grown = relax_interval(*s, box2({1, 1}, {5, 2}), at(s, {3, 4}));
  CHECK(grown == box2({1, 1}, {5, 4}));
  // A contained state changes nothing.
  CHECK(relax_interval(*s, box2({1, 1}, {5, 4}), at(s, {3, 4})) == box2({1, 1}, {5, 4}));

  SchemaPtr cat = std::make_shared<const FeatureSchema>(std::vector<FeatureSpec>{
      FeatureSpec::interval("Row", {1}, {4}),
      FeatureSpec::categorical("Mode", {"a", "b", "c"})});
  const AABI wider = relax_interval(*cat, AABI{{2}, {2}, {0b001}}, SymbolicState(cat, {4, 2}));
  CHECK(wider == AABI{{2}, {4}, {0b101}});
}

TEST_CASE("volume multiplies extents and set sizes") {
  SchemaPtr s = grid8();
  CHECK(aabi_volume(*s, box2({1, 1}, {8, 8})) == 64.0);
  CHECK(aabi_volume(*s, box2({3, 5}, {3, 5})) == 1.0);
  SchemaPtr cat = std::make_shared<const FeatureSchema>(std::vector<FeatureSpec>{
      FeatureSpec::interval("Row", {1}, {4}),
      FeatureSpec::categorical("Mode", {"a", "b", "c"})});
  CHECK(aabi_volume(*cat, AABI{{1}, {2}, {0b101}}) == 4.0);
}

TEST_CASE("split removes the observed slab on the widest axis") {
  SchemaPtr s = grid8();

  SUBCASE("square box ties to the first axis") {
    const auto [lower, upper] = split_interval(*s, box2({1, 1}, {8, 8}), at(s, {3, 5}));
    REQUIRE(lower.has_value());
    REQUIRE(upper.has_value());
    CHECK(*lower == box2({1, 1}, {2, 8}));
    CHECK(*upper == box2({4, 1}, {8, 8}));
  }

  SUBCASE("state on the boundary leaves one side empty") {
    const auto [lower, upper] = split_interval(*s, box2({1, 1}, {1, 8}), at(s, {1, 1}));
    CHECK_FALSE(lower.has_value());
    REQUIRE(upper.has_value());
    CHECK(*upper == box2({1, 2}, {1, 8}));
  }

  SUBCASE("point box vanishes") {
    const auto [lower, upper] = split_interval(*s, box2({3, 5}, {3, 5}), at(s, {3, 5}));
    CHECK_FALSE(lower.has_value());
    CHECK_FALSE(upper.has_value());
  }

  SUBCASE("contract violations") {
    CHECK_THROWS_AS(split_interval(*s, box2({1, 1}, {2, 2}), at(s, {3, 5})), ContractError);
    SchemaPtr cat = std::make_shared<const FeatureSchema>(
        std::vector<FeatureSpec>{FeatureSpec::categorical("Mode", {"a", "b"})});
    CHECK_THROWS_AS(split_interval(*cat, AABI{{}, {}, {0b11}}, SymbolicState(cat, {0})),
                    ContractError);
  }
}

TEST_CASE("geometry agrees with point-set enumeration") {
  Rng rng = make_rng(404, 1);
  for (int round = 0; round < 60; ++round) {
    SchemaPtr schema = testsupport::random_schema(rng);
    const std::vector<SymbolicState> domain = all_states(schema);
    for (int i = 0; i < 12; ++i) {
      const AABI a = random_box(schema, rng);
      const AABI b = random_box(schema, rng);
      const std::set<std::string> pa = point_set(schema, a, domain);
      const std::set<std::string> pb = point_set(schema, b, domain);

      CHECK(aabi_volume(*schema, a) == static_cast<double>(pa.size()));

      std::set<std::string> inter;
      for (const std::string& k : pa)
        if (pb.count(k)) inter.insert(k);
      CHECK(intervals_overlap(*schema, a, b) == !inter.empty());
      CHECK(intervals_overlap(*schema, a, b) == intervals_overlap(*schema, b, a));

      bool subset = true;
      for (const std::string& k : pb)
        if (!pa.count(k)) subset = false;
      CHECK(contains_aabi(*schema, a, b) == subset);

      const SymbolicState s = testsupport::random_state(schema, rng);
      const AABI grown = relax_interval(*schema, a, s);
      CHECK(contains_point(*schema, grown, s));
      CHECK(contains_aabi(*schema, grown, a));

      if (schema->int_axis_count() > 0 && contains_point(*schema, a, s)) {
        const auto [lower, upper] = split_interval(*schema, a, s);
        std::set<std::string> halves;
        for (const auto& half : {lower, upper}) {
          if (!half.has_value()) continue;
          CHECK(contains_aabi(*schema, a, *half));
          CHECK_FALSE(contains_point(*schema, *half, s));
          for (const std::string& k : point_set(schema, *half, domain)) {
            CHECK(halves.insert(k).second);  // halves must be disjoint
          }
        }
        // Which axis was cut is visible in the changed bounds; reconstruct
        // the removed slab and check the halves cover exactly the rest.
        std::size_t axis = 0;
        bool axis_known = false;
        for (const auto& half : {lower, upper}) {
          if (!half.has_value()) continue;
          for (std::size_t ax = 0; ax < a.lo.size(); ++ax) {
            if (half->lo[ax] != a.lo[ax] || half->hi[ax] != a.hi[ax]) {
              axis = ax;
              axis_known = true;
            }
          }
        }
        if (!axis_known) {
          // Both halves empty: every integer axis of the box is a single
          // value, so the slab is the whole box.
          for (std::size_t ax = 0; ax < a.lo.size(); ++ax) CHECK(a.lo[ax] == a.hi[ax]);
          CHECK(halves.empty());
        } else {
          // Recover the state's value on the cut axis to rebuild the slab.
          std::set<std::string> expected;
          for (const SymbolicState& p : domain) {
            if (!contains_point(*schema, a, p)) continue;
            std::size_t seen = 0;
            std::int32_t value = 0, want = 0;
            for (std::size_t f = 0; f < schema->feature_count(); ++f) {
              const FeatureSpec& spec = schema->feature(f);
              if (spec.kind != FeatureKind::IntegerInterval) continue;
              for (std::size_t ax2 = 0; ax2 < spec.lo.size(); ++ax2, ++seen) {
                if (seen == axis) {
                  value = p.interval_value(f)[ax2];
                  want = s.interval_value(f)[ax2];
                }
              }
            }
            if (value != want) expected.insert(p.key().bytes);
          }
          CHECK(halves == expected);
        }
      }
    }
  }
}

TEST_CASE("update walks through all four outcomes") {
  SchemaPtr s = row8();
  RuleModel model(s, 2);
  CHECK(model.rule_count() == 0);
  CHECK_FALSE(model.predict(at(s, {2}), 0).has_value());

  // First sighting: point rule.
  const UpdateOutcome created = model.update(at(s, {2}), 0, at(s, {3}), 0.0, false);
  CHECK(created.kind == UpdateKind::Created);
  CHECK(created.rule_id == -1);
  CHECK(created.new_rule_id == 1);
  REQUIRE(model.rule_count() == 1);
  CHECK(model.rules()[0].preconditions == std::vector<AABI>{AABI{{2}, {2}, {}}});
  CHECK(model.rules()[0].hits == 0);

  // Same observation again: confirmation only.
  const UpdateOutcome same = model.update(at(s, {2}), 0, at(s, {3}), 0.0, false);
  CHECK(same.kind == UpdateKind::NoChange);
  CHECK(same.rule_id == 1);
  CHECK(model.rules()[0].hits == 1);

  // Same effect from a nearby state: the box widens.
  const UpdateOutcome widened = model.update(at(s, {4}), 0, at(s, {5}), 0.0, false);
  CHECK(widened.kind == UpdateKind::Relaxed);
  CHECK(widened.rule_id == 1);
  CHECK(model.rules()[0].preconditions == std::vector<AABI>{AABI{{2}, {4}, {}}});

  // A contradicting effect inside the box: split plus a fresh point rule.
  const UpdateOutcome split = model.update(at(s, {3}), 0, at(s, {3}), 0.0, false);
  CHECK(split.kind == UpdateKind::SplitAndCreated);
  CHECK(split.rule_id == 1);
  CHECK(split.new_rule_id == 2);
  CHECK(model.rules()[0].violations == 1);
  REQUIRE(model.rule_count() == 2);

  // The cut must leave (2) and (4) with the old effect and (3) with the new.
  auto p2 = model.predict(at(s, {2}), 0);
  auto p3 = model.predict(at(s, {3}), 0);
  auto p4 = model.predict(at(s, {4}), 0);
  REQUIRE(p2.has_value());
  REQUIRE(p3.has_value());
  REQUIRE(p4.has_value());
  CHECK(p2->next == at(s, {3}));
  CHECK(p3->next == at(s, {3}));
  CHECK(p3->rule_id == 2);
  CHECK(p4->next == at(s, {5}));
  model.check_invariants();

  // Different action: rules do not interfere across actions.
  CHECK_FALSE(model.predict(at(s, {2}), 1).has_value());
  const UpdateOutcome other_action = model.update(at(s, {2}), 1, at(s, {1}), 0.0, false);
  CHECK(other_action.kind == UpdateKind::Created);
  model.check_invariants();
}

TEST_CASE("update reproduces each observation it was fed") {
  SchemaPtr s = row8();
  RuleModel model(s, 1);
  // A deliberately contradictory little history.
  const struct {
    std::int32_t from, to;
    double reward;
    bool terminal;
  } history[] = {{2, 3, 0.0, false}, {4, 5, 0.0, false}, {3, 3, 0.0, false},
                 {5, 6, 0.0, false}, {6, 6, 1.0, true},  {1, 2, 0.0, false},
                 {6, 6, 0.0, false}, {3, 3, 0.0, false}, {8, 8, -1.0, true}};
  for (const auto& h : history) {
    model.update(at(s, {h.from}), 0, at(s, {h.to}), h.reward, h.terminal);
    const auto pred = model.predict(at(s, {h.from}), 0);
    REQUIRE(pred.has_value());
    CHECK(pred->next == at(s, {h.to}));
    CHECK(pred->reward == h.reward);
    CHECK(pred->terminal == h.terminal);
    model.check_invariants();
  }
}

TEST_CASE("widening that would collide falls back to a point box") {
  SchemaPtr s = grid8();
  RuleModel model(s, 1);
  const StateDelta step_east = diff(at(s, {2, 2}), at(s, {2, 3}));

  // Rule 1: move east, seen at (2,2).
  model.update(at(s, {2, 2}), 0, at(s, {2, 3}), 0.0, false);
  // Rule 2: stand still, relaxed over column 4 rows 1..3.
  model.update(at(s, {1, 4}), 0, at(s, {1, 4}), 0.0, false);
  model.update(at(s, {2, 4}), 0, at(s, {2, 4}), 0.0, false);
  model.update(at(s, {3, 4}), 0, at(s, {3, 4}), 0.0, false);
  REQUIRE(model.rule_count() == 2);
  CHECK(model.rules()[1].preconditions == std::vector<AABI>{AABI{{1, 4}, {3, 4}, {}}});

  // Move east seen again at (2,6): the hull rows[2,2] x cols[2,6] would cross
  // the stand-still column, so rule 1 gains a point box instead.
  const UpdateOutcome fallback = model.update(at(s, {2, 6}), 0, at(s, {2, 7}), 0.0, false);
  CHECK(fallback.kind == UpdateKind::Relaxed);
  CHECK(fallback.rule_id == 1);
  REQUIRE(model.rules()[0].preconditions.size() == 2);
  CHECK(model.rules()[0].preconditions[0] == box2({2, 2}, {2, 2}));
  CHECK(model.rules()[0].preconditions[1] == box2({2, 6}, {2, 6}));
  model.check_invariants();

  // Verify the delta really is shared (the fallback kept one rule).
  CHECK(model.rules()[0].effect.delta == step_east);

  // The new sibling box can widen normally while staying clear of both the
  // other rule and its own sibling.
  const UpdateOutcome grown = model.update(at(s, {2, 5}), 0, at(s, {2, 6}), 0.0, false);
  CHECK(grown.kind == UpdateKind::Relaxed);
  CHECK(grown.rule_id == 1);
  CHECK(model.rules()[0].preconditions[0] == box2({2, 2}, {2, 2}));
  CHECK(model.rules()[0].preconditions[1] == box2({2, 5}, {2, 6}));
  model.check_invariants();

  for (const auto& [from, to] :
       std::vector<std::pair<std::vector<std::int32_t>, std::vector<std::int32_t>>>{
           {{2, 2}, {2, 3}}, {{2, 4}, {2, 4}}, {{2, 5}, {2, 6}}, {{2, 6}, {2, 7}}}) {
    const auto pred = model.predict(at(s, from), 0);
    REQUIRE(pred.has_value());
    CHECK(pred->next == at(s, to));
  }
}

TEST_CASE("splits cut every covering rule and survive emptying") {
  SchemaPtr s = row8();
  RuleModel model(s, 1);
  // Relax a rule across [2,4], then contradict at 2 (boundary: lower half
  // empty) and at 4 (upper half empty), then at 3 (both halves empty, the
  // rule disappears).
  model.update(at(s, {2}), 0, at(s, {3}), 0.0, false);
  model.update(at(s, {4}), 0, at(s, {5}), 0.0, false);
  CHECK(model.rules()[0].preconditions == std::vector<AABI>{AABI{{2}, {4}, {}}});

  model.update(at(s, {2}), 0, at(s, {2}), 0.0, false);
  CHECK(model.rule_count() == 2);
  CHECK(model.rules()[0].preconditions == std::vector<AABI>{AABI{{3}, {4}, {}}});

  model.update(at(s, {4}), 0, at(s, {4}), 0.0, false);
  CHECK(model.rule_count() == 3);
  CHECK(model.rules()[0].preconditions == std::vector<AABI>{AABI{{3}, {3}, {}}});

  const UpdateOutcome last = model.update(at(s, {3}), 0, at(s, {3}), 0.0, false);
  CHECK(last.kind == UpdateKind::SplitAndCreated);
  CHECK(last.rule_id == 1);  // the erased rule still names the split
  // Rule 1 is gone; the three contradictions each created a point rule.
  CHECK(model.rule_count() == 3);
  for (const Rule& r : model.rules()) CHECK(r.id != 1);
  model.check_invariants();
  for (std::int32_t v : {2, 3, 4}) {
    const auto pred = model.predict(at(s, {v}), 0);
    REQUIRE(pred.has_value());
    CHECK(pred->next == at(s, {v}));
  }
}

TEST_CASE("categorical-only contradictions drop symbols instead of axes") {
  SchemaPtr s = std::make_shared<const FeatureSchema>(std::vector<FeatureSpec>{
      FeatureSpec::categorical("Color", {"a", "b", "c"}),
      FeatureSpec::categorical("Light", {"on", "off"})});
  RuleModel model(s, 1);
  auto st = [&](std::int32_t color, std::int32_t light) {
    return SymbolicState(s, {color, light});
  };

  // "Any color, light on -> light off" learned from three observations.
  model.update(st(0, 0), 0, st(0, 1), 0.0, false);
  model.update(st(1, 0), 0, st(1, 1), 0.0, false);
  model.update(st(2, 0), 0, st(2, 1), 0.0, false);
  REQUIRE(model.rule_count() == 1);
  CHECK(model.rules()[0].preconditions == std::vector<AABI>{AABI{{}, {}, {0b111, 0b01}}});

  // Color b turns out not to switch: the largest symbol set loses b.
  const UpdateOutcome split = model.update(st(1, 0), 0, st(1, 0), 0.0, false);
  CHECK(split.kind == UpdateKind::SplitAndCreated);
  REQUIRE(model.rule_count() == 2);
  CHECK(model.rules()[0].preconditions == std::vector<AABI>{AABI{{}, {}, {0b101, 0b01}}});
  CHECK(model.rules()[1].preconditions == std::vector<AABI>{AABI{{}, {}, {0b010, 0b01}}});
  model.check_invariants();

  // Colors a and c follow suit; the original rule empties out and is erased.
  model.update(st(0, 0), 0, st(0, 0), 0.0, false);
  CHECK(model.rules()[0].preconditions == std::vector<AABI>{AABI{{}, {}, {0b100, 0b01}}});
  const UpdateOutcome gone = model.update(st(2, 0), 0, st(2, 0), 0.0, false);
  CHECK(gone.kind == UpdateKind::SplitAndCreated);
  CHECK(model.rule_count() == 3);
  for (const Rule& r : model.rules()) CHECK(r.id != 1);
  model.check_invariants();
  for (std::int32_t color : {0, 1, 2}) {
    const auto pred = model.predict(st(color, 0), 0);
    REQUIRE(pred.has_value());
    CHECK(pred->next == st(color, 0));
  }
}

TEST_CASE("reward and terminal mismatches are contradictions too") {
  SchemaPtr s = row8();

  SUBCASE("reward") {
    RuleModel model(s, 1);
    model.update(at(s, {2}), 0, at(s, {3}), 0.0, false);
    const UpdateOutcome out = model.update(at(s, {2}), 0, at(s, {3}), 1.0, false);
    CHECK(out.kind == UpdateKind::SplitAndCreated);
    const auto pred = model.predict(at(s, {2}), 0);
    REQUIRE(pred.has_value());
    CHECK(pred->reward == 1.0);
  }

  SUBCASE("terminal") {
    RuleModel model(s, 1);
    model.update(at(s, {2}), 0, at(s, {3}), 0.0, false);
    const UpdateOutcome out = model.update(at(s, {2}), 0, at(s, {3}), 0.0, true);
    CHECK(out.kind == UpdateKind::SplitAndCreated);
    const auto pred = model.predict(at(s, {2}), 0);
    REQUIRE(pred.has_value());
    CHECK(pred->terminal);
  }

  SUBCASE("identical deltas from different symbols stay separate rules") {
    // Categorical transitions record which symbol they replaced, so door
    // openings from Locked and from Closed are different effects.
    SchemaPtr door = std::make_shared<const FeatureSchema>(std::vector<FeatureSpec>{
        FeatureSpec::categorical("DoorState", {"Locked", "Closed", "Open"})});
    RuleModel model(door, 1);
    model.update(SymbolicState(door, {0}), 0, SymbolicState(door, {2}), 0.0, false);
    model.update(SymbolicState(door, {1}), 0, SymbolicState(door, {2}), 0.0, false);
    CHECK(model.rule_count() == 2);
    model.check_invariants();
  }
}

TEST_CASE("prediction contract") {
  SchemaPtr s = row8();
  RuleModel model(s, 2);
  model.update(at(s, {2}), 0, at(s, {3}), 0.5, false);

  CHECK_THROWS_AS(model.predict(at(s, {2}), 2), DomainError);
  CHECK_THROWS_AS(model.predict(at(s, {2}), -1), DomainError);
  CHECK_FALSE(model.predict(at(s, {8}), 0).has_value());

  const auto pred = model.predict(at(s, {2}), 0);
  REQUIRE(pred.has_value());
  CHECK(pred->next == at(s, {3}));
  CHECK(pred->reward == 0.5);
  CHECK_FALSE(pred->terminal);
  CHECK(pred->rule_id == 1);

  SUBCASE("states from a foreign schema are rejected") {
    SchemaPtr other = std::make_shared<const FeatureSchema>(
        std::vector<FeatureSpec>{FeatureSpec::interval("Col", {1}, {8})});
    CHECK_THROWS_AS(model.predict(SymbolicState(other, {2}), 0), SchemaError);
    CHECK_THROWS_AS(model.update(SymbolicState(other, {2}), 0, SymbolicState(other, {3}), 0.0,
                                 false),
                    SchemaError);
  }
}

TEST_CASE("overlapping same-effect rules tie to the lowest id") {
  // Same-effect overlap cannot arise from update(), so build it by hand
  // through serialization and check predict picks the lowest id.
  SchemaPtr s = row8();
  RuleModel seeded(s, 1);
  seeded.update(at(s, {2}), 0, at(s, {3}), 0.0, false);
  nlohmann::json j = seeded.to_json();
  nlohmann::json rule = j["rules"][0];
  rule["id"] = 7;
  rule["preconditions"][0]["lo"] = {1};
  rule["preconditions"][0]["hi"] = {4};
  j["rules"].push_back(rule);
  j["next_id"] = 8;

  RuleModel model = RuleModel::from_json(j);
  REQUIRE(model.rule_count() == 2);
  model.check_invariants();  // same effect, so the overlap is legal
  const auto pred = model.predict(at(s, {2}), 0);
  REQUIRE(pred.has_value());
  CHECK(pred->rule_id == 1);

  SUBCASE("conflicting covering rules raise the invariant alarm") {
    nlohmann::json bad = j;
    bad["rules"][1]["effect"]["reward"] = 1.0;
    RuleModel broken = RuleModel::from_json(bad);
    CHECK_THROWS_AS(broken.predict(at(s, {2}), 0), InvariantViolation);
    CHECK_THROWS_AS(broken.check_invariants(), InvariantViolation);
  }
}

TEST_CASE("model json round trip is lossless") {
  SchemaPtr s = std::make_shared<const FeatureSchema>(std::vector<FeatureSpec>{
      FeatureSpec::interval("Loc", {1, 1}, {6, 6}),
      FeatureSpec::categorical("Mode", {"idle", "busy"})});
  RuleModel model(s, 3);
  Rng rng = make_rng(77, 3);
  for (int i = 0; i < 200; ++i) {
    const SymbolicState prev = testsupport::random_state(s, rng);
    const SymbolicState next = testsupport::random_state(s, rng);
    const int action = static_cast<int>(next_below(rng, 3));
    const double reward = next_double(rng) < 0.2 ? 1.0 : 0.0;
    model.update(prev, action, next, reward, next_double(rng) < 0.1);
  }
  model.check_invariants();

  const nlohmann::json j = model.to_json();
  RuleModel back = RuleModel::from_json(j);
  back.check_invariants();
  REQUIRE(back.rule_count() == model.rule_count());
  for (std::size_t i = 0; i < model.rule_count(); ++i) {
    CHECK(back.rules()[i].id == model.rules()[i].id);
    CHECK(back.rules()[i].action == model.rules()[i].action);
    CHECK(back.rules()[i].preconditions == model.rules()[i].preconditions);
    CHECK(back.rules()[i].effect == model.rules()[i].effect);
    CHECK(back.rules()[i].hits == model.rules()[i].hits);
    CHECK(back.rules()[i].violations == model.rules()[i].violations);
  }
  // Full-domain prediction equivalence and dump stability.
  for (const SymbolicState& st : all_states(s)) {
    for (int a = 0; a < 3; ++a) {
      const auto lhs = model.predict(st, a);
      const auto rhs = back.predict(st, a);
      CHECK(lhs.has_value() == rhs.has_value());
      if (lhs && rhs) {
        CHECK(lhs->next == rhs->next);
        CHECK(lhs->reward == rhs->reward);
        CHECK(lhs->terminal == rhs->terminal);
        CHECK(lhs->rule_id == rhs->rule_id);
      }
    }
  }
  CHECK(back.to_json().dump() == j.dump());

  // A fresh model keeps learning where the deserialized one left off.
  const SymbolicState probe = testsupport::random_state(s, rng);
  const UpdateOutcome a1 = model.update(probe, 0, probe, 0.25, false);
  const UpdateOutcome a2 = back.update(probe, 0, probe, 0.25, false);
  CHECK(a1.kind == a2.kind);
  CHECK(a1.rule_id == a2.rule_id);
  CHECK(a1.new_rule_id == a2.new_rule_id);
}

TEST_CASE("random transition storms keep the invariants") {
  Rng rng = make_rng(505, 9);
  int created = 0, unchanged = 0, relaxed = 0, split = 0;
  for (int world_i = 0; world_i < 120; ++world_i) {
    testsupport::SyntheticWorld world{testsupport::random_schema(rng),
                                      1 + static_cast<int>(next_below(rng, 3)),
                                      derive_seed(505, static_cast<std::uint64_t>(world_i))};
    RuleModel model(world.schema, world.actions);
    SymbolicState state = testsupport::random_state(world.schema, rng);
    for (int step = 0; step < 40; ++step) {
      // Mix chained walks with jumps so revisits actually happen.
      if (next_double(rng) < 0.3) state = testsupport::random_state(world.schema, rng);
      const int action = static_cast<int>(next_below(rng, world.actions));
      const testsupport::SyntheticStep res = testsupport::synthetic_step(world, state, action);
      const UpdateOutcome out = model.update(state, action, res.next, res.reward, res.terminal);
      switch (out.kind) {
        case UpdateKind::Created: ++created; break;
        case UpdateKind::NoChange: ++unchanged; break;
        case UpdateKind::Relaxed: ++relaxed; break;
        case UpdateKind::SplitAndCreated: ++split; break;
      }
      model.check_invariants();
      const auto pred = model.predict(state, action);
      REQUIRE(pred.has_value());
      CHECK(pred->next == res.next);
      CHECK(pred->reward == res.reward);
      CHECK(pred->terminal == res.terminal);
      state = res.terminal ? testsupport::random_state(world.schema, rng) : res.next;
    }
  }
  // The storm must actually exercise every outcome, else it proves nothing.
  CHECK(created > 0);
  CHECK(unchanged > 0);
  CHECK(relaxed > 0);
  CHECK(split > 0);
}

TEST_CASE("constructor validation") {
  SchemaPtr s = row8();
  CHECK_THROWS_AS(RuleModel(nullptr, 2), SchemaError);
  CHECK_THROWS_AS(RuleModel(s, 0), ConfigError);
  CHECK_THROWS_AS(RuleModel(s, -3), ConfigError);
}

}  // TEST_SUITE
