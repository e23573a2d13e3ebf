#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "worldcloner/feature.hpp"
#include "worldcloner/rng.hpp"

namespace worldcloner {

enum class Provenance { Real, Imagined };
const char* provenance_name(Provenance p);

struct Transition {
  SymbolicState state;
  int action = 0;
  SymbolicState next_state;
  double reward = 0.0;
  bool terminal = false;
  Provenance provenance = Provenance::Real;
};

// Bounded FIFO of transitions. Eviction is oldest-first; the per-provenance
// counts track the current contents.
class UpdateBuffer {
 public:
  explicit UpdateBuffer(std::size_t capacity = 4096);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const;  // 0 = oldest
  std::uint64_t real_count() const { return real_count_; }
  std::uint64_t imagined_count() const { return imagined_count_; }
  void clear();

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;  // ring once full
  std::size_t head_ = 0;           // index of the oldest element
  std::uint64_t real_count_ = 0;
  std::uint64_t imagined_count_ = 0;
};

enum class ActionMode { Explore, Exploit };

struct PolicyConfig {
  int action_count = 0;
  double alpha = 0.1;
  double gamma = 0.99;
  double epsilon_start = 1.0;
  double epsilon_floor = 0.05;
  std::uint64_t epsilon_decay_steps = 25000;
  double q_init = 0.0;  // initial value of unseen (state, action) entries
};

// Tabular Q-learning over exact state keys. Freezing pins the exploration
// rate to its floor and rejects updates; the decay schedule's position is
// kept, so unfreezing resumes where training left off. The update rule is a
// single code path regardless of where a transition came from.
class TabularQPolicy {
 public:
  TabularQPolicy(PolicyConfig cfg, std::uint64_t seed);

  // Explore: with probability epsilon() a uniform random action, otherwise
  // the greedy choice; advances the decay schedule while learning is on.
  // Exploit: greedy only, no randomness consumed. Greedy ties break toward
  // the lowest action index.
  int select_action(const SymbolicState& state, ActionMode mode);

  // One Q-write: Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') * (1 - terminal) - Q(s,a)).
  void update(const Transition& t);

  // Applies update() to min(batch_size, buffer.size()) transitions sampled
  // uniformly without replacement.
  void update_from_buffer(const UpdateBuffer& buffer, std::size_t batch_size);

  void set_learning(bool enabled);
  bool learning_enabled() const { return learning_enabled_; }

  double epsilon() const;  // effective rate: pinned to the floor while frozen
  std::uint64_t epsilon_steps() const { return epsilon_steps_; }
  std::uint64_t updates_count() const { return updates_count_; }

  double q(const StateKey& key, int action) const;
  double max_q(const StateKey& key) const;
  int greedy_action(const StateKey& key) const;
  std::size_t table_size() const { return table_.size(); }

  const PolicyConfig& config() const { return cfg_; }
  nlohmann::json to_json() const;

 private:
  std::vector<double>& row(const StateKey& key);

  PolicyConfig cfg_;
  Rng rng_;
  bool learning_enabled_ = true;
  std::uint64_t epsilon_steps_ = 0;
  std::uint64_t updates_count_ = 0;
  std::unordered_map<StateKey, std::vector<double>> table_;
};

}  // namespace worldcloner
