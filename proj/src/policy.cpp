#include "worldcloner/policy.hpp"

#include <algorithm>
#include <cmath>

#include "worldcloner/errors.hpp"

namespace worldcloner {

const char* provenance_name(Provenance p) {
  return p == Provenance::Real ? "real" : "imagined";
}

UpdateBuffer::UpdateBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("update buffer capacity must be positive");
}

void UpdateBuffer::push(Transition t) {
  auto& count = t.provenance == Provenance::Real ? real_count_ : imagined_count_;
  ++count;
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  Transition& oldest = items_[head_];
  auto& evicted = oldest.provenance == Provenance::Real ? real_count_ : imagined_count_;
  --evicted;
  oldest = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& UpdateBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw DomainError("buffer index out of range");
  return items_[(head_ + i) % items_.size()];
}

void UpdateBuffer::clear() {
  items_.clear();
  head_ = 0;
  real_count_ = 0;
  imagined_count_ = 0;
}

TabularQPolicy::TabularQPolicy(PolicyConfig cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(make_rng(seed, 0x90)) {
  if (cfg.action_count < 1) throw ConfigError("policy needs at least one action");
  if (!(cfg.alpha > 0.0) || cfg.alpha > 1.0) throw ConfigError("alpha must be in (0, 1]");
  if (cfg.gamma < 0.0 || cfg.gamma >= 1.0) throw ConfigError("gamma must be in [0, 1)");
  if (cfg.epsilon_start < 0.0 || cfg.epsilon_start > 1.0 || cfg.epsilon_floor < 0.0 ||
      cfg.epsilon_floor > cfg.epsilon_start)
    throw ConfigError("epsilon schedule must satisfy 0 <= floor <= start <= 1");
  if (!std::isfinite(cfg.q_init)) throw ConfigError("q_init must be finite");
}

std::vector<double>& TabularQPolicy::row(const StateKey& key) {
  auto it = table_.find(key);
  if (it == table_.end())
    it = table_.emplace(key, std::vector<double>(static_cast<std::size_t>(cfg_.action_count),
                                                 cfg_.q_init))
             .first;
  return it->second;
}

double TabularQPolicy::q(const StateKey& key, int action) const {
  if (action < 0 || action >= cfg_.action_count) throw DomainError("action out of range");
  const auto it = table_.find(key);
  return it == table_.end() ? cfg_.q_init : it->second[static_cast<std::size_t>(action)];
}

double TabularQPolicy::max_q(const StateKey& key) const {
  const auto it = table_.find(key);
  if (it == table_.end()) return cfg_.q_init;
  return *std::max_element(it->second.begin(), it->second.end());
}

int TabularQPolicy::greedy_action(const StateKey& key) const {
  const auto it = table_.find(key);
  if (it == table_.end()) return 0;
  const auto& q = it->second;
  int best = 0;
  for (int a = 1; a < cfg_.action_count; ++a)
    if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
  return best;
}

int TabularQPolicy::select_action(const SymbolicState& state, ActionMode mode) {
  const StateKey key = state.key();
  if (mode == ActionMode::Exploit) return greedy_action(key);
  const double eps = epsilon();
  if (learning_enabled_) ++epsilon_steps_;
  if (next_double(rng_) < eps)
    return static_cast<int>(next_below(rng_, static_cast<std::uint64_t>(cfg_.action_count)));
  return greedy_action(key);
}

void TabularQPolicy::update(const Transition& t) {
  if (!learning_enabled_) throw ContractError("policy update while learning is frozen");
  if (t.action < 0 || t.action >= cfg_.action_count) throw DomainError("action out of range");
  const double target =
      t.reward + (t.terminal ? 0.0 : cfg_.gamma * max_q(t.next_state.key()));
  double& qsa = row(t.state.key())[static_cast<std::size_t>(t.action)];
  qsa += cfg_.alpha * (target - qsa);
  ++updates_count_;
}

void TabularQPolicy::update_from_buffer(const UpdateBuffer& buffer, std::size_t batch_size) {
  if (!learning_enabled_) throw ContractError("policy update while learning is frozen");
  const std::size_t k = std::min(batch_size, buffer.size());
  if (k == 0) return;
  const auto picks = sample_without_replacement(rng_, buffer.size(), k);
  for (const std::size_t i : picks) update(buffer.at(i));
}

void TabularQPolicy::set_learning(bool enabled) { learning_enabled_ = enabled; }

double TabularQPolicy::epsilon() const {
  if (!learning_enabled_ || cfg_.epsilon_decay_steps == 0) return cfg_.epsilon_floor;
  const double progress =
      static_cast<double>(std::min(epsilon_steps_, cfg_.epsilon_decay_steps)) /
      static_cast<double>(cfg_.epsilon_decay_steps);
  return cfg_.epsilon_start - (cfg_.epsilon_start - cfg_.epsilon_floor) * progress;
}

nlohmann::json TabularQPolicy::to_json() const {
  static const char* kHex = "0123456789abcdef";
  std::vector<const StateKey*> keys;
  keys.reserve(table_.size());
  for (const auto& [key, values] : table_) keys.push_back(&key);
  std::sort(keys.begin(), keys.end(),
            [](const StateKey* a, const StateKey* b) { return *a < *b; });

  nlohmann::json entries = nlohmann::json::array();
  for (const StateKey* key : keys) {
    std::string hex;
    hex.reserve(key->bytes.size() * 2);
    for (const char c : key->bytes) {
      const auto b = static_cast<unsigned char>(c);
      hex.push_back(kHex[b >> 4]);
      hex.push_back(kHex[b & 15]);
    }
    entries.push_back(nlohmann::json{{"key", std::move(hex)}, {"q", table_.at(*key)}});
  }
  return nlohmann::json{{"schema_version", 1},
                        {"alpha", cfg_.alpha},
                        {"gamma", cfg_.gamma},
                        {"epsilon", epsilon()},
                        {"epsilon_steps", epsilon_steps_},
                        {"updates_count", updates_count_},
                        {"learning_enabled", learning_enabled_},
                        {"entries", std::move(entries)}};
}

}  // namespace worldcloner
