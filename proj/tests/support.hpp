#pragma once

// Shared test support: independent reference implementations (value
// iteration, naive moving averages, exhaustive reachable-state enumeration)
// that the suites compare the library against, plus generators for random
// schemas and a deterministic synthetic transition function for fuzzing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "worldcloner/feature.hpp"
#include "worldcloner/grid_env.hpp"
#include "worldcloner/rng.hpp"
#include "worldcloner/rule_model.hpp"

namespace testsupport {

using namespace worldcloner;

// ---------------------------------------------------------------------------
// Reference value iteration over a small deterministic MDP, arcs[s][a].

struct MdpArc {
  int next = 0;
  double reward = 0.0;
  bool terminal = false;
};

inline std::vector<std::vector<double>> value_iteration(
    const std::vector<std::vector<MdpArc>>& arcs, double gamma) {
  const std::size_t states = arcs.size();
  const std::size_t actions = arcs.front().size();
  std::vector<std::vector<double>> q(states, std::vector<double>(actions, 0.0));
  for (int sweep = 0; sweep < 200000; ++sweep) {
    double shift = 0.0;
    for (std::size_t s = 0; s < states; ++s) {
      for (std::size_t a = 0; a < actions; ++a) {
        const MdpArc& arc = arcs[s][a];
        double target = arc.reward;
        if (!arc.terminal) {
          double best = q[static_cast<std::size_t>(arc.next)][0];
          for (std::size_t b = 1; b < actions; ++b) {
            best = std::max(best, q[static_cast<std::size_t>(arc.next)][b]);
          }
          target += gamma * best;
        }
        shift = std::max(shift, std::abs(target - q[s][a]));
        q[s][a] = target;
      }
    }
    if (shift < 1e-13) break;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Naive trailing moving average (quadratic, no running-sum tricks).

inline std::vector<double> naive_moving_average(const std::vector<double>& values, int window) {
  std::vector<double> out;
  const std::size_t w = static_cast<std::size_t>(window);
  if (window < 1 || values.size() < w) return out;
  for (std::size_t end = w; end <= values.size(); ++end) {
    double sum = 0.0;
    for (std::size_t i = end - w; i < end; ++i) sum += values[i];
    out.push_back(sum / static_cast<double>(window));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration of a schema's domain (desk-sized schemas only).

inline std::vector<SymbolicState> all_states(const SchemaPtr& schema) {
  std::vector<std::pair<std::int32_t, std::int32_t>> ranges;
  for (std::size_t f = 0; f < schema->feature_count(); ++f) {
    const FeatureSpec& spec = schema->feature(f);
    if (spec.kind == FeatureKind::IntegerInterval) {
      for (std::size_t a = 0; a < spec.lo.size(); ++a) ranges.emplace_back(spec.lo[a], spec.hi[a]);
    } else {
      ranges.emplace_back(0, static_cast<std::int32_t>(spec.symbols.size()) - 1);
    }
  }
  std::vector<std::int32_t> data;
  data.reserve(ranges.size());
  for (const auto& r : ranges) data.push_back(r.first);
  std::vector<SymbolicState> out;
  while (true) {
    out.emplace_back(schema, data);
    std::size_t i = 0;
    for (; i < data.size(); ++i) {
      if (data[i] < ranges[i].second) {
        ++data[i];
        break;
      }
      data[i] = ranges[i].first;
    }
    if (i == data.size()) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random schemas and states for fuzzing.

inline SymbolicState random_state(const SchemaPtr& schema, Rng& rng) {
  std::vector<std::int32_t> data(schema->flat_size());
  std::size_t slot = 0;
  for (std::size_t f = 0; f < schema->feature_count(); ++f) {
    const FeatureSpec& spec = schema->feature(f);
    if (spec.kind == FeatureKind::IntegerInterval) {
      for (std::size_t a = 0; a < spec.lo.size(); ++a) {
        const std::uint64_t span = static_cast<std::uint64_t>(spec.hi[a] - spec.lo[a]) + 1;
        data[slot++] = spec.lo[a] + static_cast<std::int32_t>(next_below(rng, span));
      }
    } else {
      data[slot++] = static_cast<std::int32_t>(next_below(rng, spec.symbols.size()));
    }
  }
  return SymbolicState(schema, std::move(data));
}

// One to three small features (interval axes 1-2 wide with domains of 2-5
// values, categorical features with 2-4 symbols), in random order.
inline SchemaPtr random_schema(Rng& rng) {
  static const char* kSymbols[] = {"sa", "sb", "sc", "sd"};
  const std::uint64_t count = 1 + next_below(rng, 3);
  std::vector<FeatureSpec> specs;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = "f" + std::to_string(i);
    if (next_double(rng) < 0.6) {
      const std::uint64_t axes = 1 + next_below(rng, 2);
      std::vector<std::int32_t> lo, hi;
      for (std::uint64_t a = 0; a < axes; ++a) {
        const std::int32_t low = static_cast<std::int32_t>(next_below(rng, 4)) - 2;
        lo.push_back(low);
        hi.push_back(low + 1 + static_cast<std::int32_t>(next_below(rng, 4)));
      }
      specs.push_back(FeatureSpec::interval(name, lo, hi));
    } else {
      const std::uint64_t n = 2 + next_below(rng, 3);
      std::vector<std::string> symbols(kSymbols, kSymbols + n);
      specs.push_back(FeatureSpec::categorical(name, symbols));
    }
  }
  return std::make_shared<const FeatureSchema>(std::move(specs));
}

// ---------------------------------------------------------------------------
// Deterministic synthetic dynamics: a pure function of (state, action) and a
// per-world seed, so repeated observations of a pair always agree.

inline std::uint64_t fnv64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ULL ^ seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct SyntheticWorld {
  SchemaPtr schema;
  int actions = 2;
  std::uint64_t seed = 0;
};

struct SyntheticStep {
  SymbolicState next;
  double reward = 0.0;
  bool terminal = false;
};

inline SyntheticStep synthetic_step(const SyntheticWorld& world, const SymbolicState& state,
                                    int action) {
  Rng rng(derive_seed(fnv64(state.key().bytes, world.seed),
                      static_cast<std::uint64_t>(action) + 1));
  SymbolicState next = random_state(world.schema, rng);
  static const double kRewards[] = {-1.0, 0.0, 1.0};
  const double reward = kRewards[next_below(rng, 3)];
  const bool terminal = next_double(rng) < 0.125;
  return SyntheticStep{std::move(next), reward, terminal};
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration of an environment's reachable non-terminal states
// via checkpoint/restore, plus helpers that replay every (state, action) arc.

struct ReachableSet {
  std::vector<SymbolicState> states;
  std::unordered_map<std::string, std::size_t> index;  // state key bytes -> position
};

inline ReachableSet enumerate_reachable(GridEnv& env, int reset_samples = 64) {
  ReachableSet out;
  auto add = [&out](const SymbolicState& s) {
    auto [it, fresh] = out.index.emplace(s.key().bytes, out.states.size());
    (void)it;
    if (fresh) out.states.push_back(s);
  };
  for (int i = 0; i < reset_samples; ++i) add(env.reset());
  for (std::size_t i = 0; i < out.states.size(); ++i) {
    for (int a = 0; a < env.action_count(); ++a) {
      env.restore(out.states[i]);
      const StepResult res = env.step(static_cast<Action>(a));
      if (!res.terminated) add(res.state);
    }
  }
  return out;
}

// Calls fn(state, action, result) for every arc of the reachable set, in
// index order. Arcs are recomputed on the fly to keep memory flat.
template <typename Fn>
inline void for_each_arc(GridEnv& env, const ReachableSet& set, Fn&& fn) {
  for (std::size_t i = 0; i < set.states.size(); ++i) {
    for (int a = 0; a < env.action_count(); ++a) {
      env.restore(set.states[i]);
      const StepResult res = env.step(static_cast<Action>(a));
      fn(set.states[i], a, res);
    }
  }
}

// In-place Fisher-Yates so shuffling stays deterministic across platforms.
template <typename T>
inline void shuffle_vec(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::uint64_t j = next_below(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

// Feeds every arc to the model in shuffled passes until a full pass produces
// no structural change. Returns the number of passes used, or -1 if
// max_passes was exhausted first.
inline int train_to_fixpoint(GridEnv& env, const ReachableSet& set, RuleModel& model, Rng& rng,
                             int max_passes) {
  std::vector<std::pair<std::size_t, int>> arcs;
  arcs.reserve(set.states.size() * static_cast<std::size_t>(env.action_count()));
  for (std::size_t i = 0; i < set.states.size(); ++i) {
    for (int a = 0; a < env.action_count(); ++a) arcs.emplace_back(i, a);
  }
  for (int pass = 1; pass <= max_passes; ++pass) {
    shuffle_vec(arcs, rng);
    bool changed = false;
    for (const auto& [i, a] : arcs) {
      env.restore(set.states[i]);
      const StepResult res = env.step(static_cast<Action>(a));
      const UpdateOutcome outcome = model.update(set.states[i], a, res.state, res.reward,
                                                 res.terminated);
      changed = changed || outcome.kind != UpdateKind::NoChange;
    }
    if (!changed) return pass;
  }
  return -1;
}

// Fraction of mispredicted random-walk steps on a fresh copy of the
// environment; a prediction misses when absent or wrong in any component.
inline double model_probe_error(const RuleModel& model, GridEnv env, Rng& rng, int steps) {
  SymbolicState state = env.reset();
  int misses = 0;
  for (int i = 0; i < steps; ++i) {
    const int action = static_cast<int>(next_below(rng, env.action_count()));
    const auto pred = model.predict(state, action);
    const StepResult res = env.step(static_cast<Action>(action));
    const bool hit = pred.has_value() && pred->next == res.state &&
                     pred->reward == res.reward && pred->terminal == res.terminated;
    if (!hit) ++misses;
    state = (res.terminated || res.truncated) ? env.reset() : res.state;
  }
  return static_cast<double>(misses) / static_cast<double>(steps);
}

}  // namespace testsupport
