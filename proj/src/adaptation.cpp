#include "worldcloner/adaptation.hpp"

#include <cmath>
#include <numeric>
#include <string_view>
#include <utility>

#include "worldcloner/errors.hpp"

namespace worldcloner {

// --- MixSchedule -------------------------------------------------------------

MixSchedule::MixSchedule(double real_fraction) : target_real_(real_fraction) {
  if (!(real_fraction > 0.0) || real_fraction > 1.0)
    throw ConfigError("mix ratio (real fraction) must be in (0, 1]");
  constexpr std::uint64_t kScale = 1000000;
  num_real_ = static_cast<std::uint64_t>(std::llround(real_fraction * kScale));
  if (num_real_ == 0) throw ConfigError("mix ratio too small to represent");
  if (num_real_ > kScale) num_real_ = kScale;
  num_imagined_ = kScale - num_real_;
  const std::uint64_t g = std::gcd(num_real_, num_imagined_);
  num_real_ /= g;
  num_imagined_ /= g;
}

int MixSchedule::on_real_step() {
  ++real_steps_;
  carry_ += num_imagined_;
  int owed = 0;
  while (carry_ >= num_real_) {
    carry_ -= num_real_;
    ++owed;
  }
  imagined_steps_ += static_cast<std::uint64_t>(owed);
  return owed;
}

// --- StartStatePool ----------------------------------------------------------

StartStatePool::StartStatePool(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("start-state pool capacity must be positive");
}

void StartStatePool::push(const SymbolicState& s) {
  if (items_.size() < capacity_) {
    items_.push_back(s);
    return;
  }
  items_[head_] = s;
  head_ = (head_ + 1) % capacity_;
}

const SymbolicState& StartStatePool::sample(Rng& rng) const {
  if (items_.empty()) throw ContractError("sampling from an empty start-state pool");
  return items_[next_below(rng, items_.size())];
}

// --- imagination -------------------------------------------------------------

Transition imagined_step(const RuleModel& model, TabularQPolicy& policy,
                         const SymbolicState& state) {
  const int a = policy.select_action(state, ActionMode::Explore);
  const std::optional<Prediction> pred = model.predict(state, a);
  if (pred)
    return Transition{state, a, pred->next, pred->reward, pred->terminal,
                      Provenance::Imagined};
  return Transition{state, a, state, 0.0, false, Provenance::Imagined};
}

std::vector<Transition> imagine_rollout(const RuleModel& model, TabularQPolicy& policy,
                                        const SymbolicState& start, int horizon) {
  if (horizon < 0) throw ConfigError("rollout horizon must be non-negative");
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(horizon));
  SymbolicState s = start;
  for (int i = 0; i < horizon; ++i) {
    Transition t = imagined_step(model, policy, s);
    const bool stop = t.terminal;
    s = t.next_state;
    out.push_back(std::move(t));
    if (stop) break;
  }
  return out;
}

ImaginationStream::ImaginationStream(int horizon) : horizon_(horizon) {
  if (horizon < 1) throw ConfigError("imagination horizon must be at least 1");
}

Transition ImaginationStream::next(const RuleModel& model, TabularQPolicy& policy,
                                   const StartStatePool& pool, Rng& rng) {
  if (!state_ || used_ >= horizon_) {
    state_ = pool.sample(rng);
    used_ = 0;
  }
  Transition t = imagined_step(model, policy, *state_);
  ++used_;
  if (t.terminal)
    state_.reset();
  else
    state_ = t.next_state;
  return t;
}

void ImaginationStream::reset() {
  state_.reset();
  used_ = 0;
}

// --- ConvergenceTracker ------------------------------------------------------

ConvergenceTracker::ConvergenceTracker(int window, int span, double rel_change)
    : window_(window), span_(span), rel_change_(rel_change) {
  if (window < 1 || span < 1 || !(rel_change > 0.0))
    throw ConfigError("convergence criterion needs window >= 1, span >= 1, rel change > 0");
}

void ConvergenceTracker::push(double episode_return) {
  recent_.push_back(episode_return);
  sum_ += episode_return;
  if (recent_.size() > static_cast<std::size_t>(window_)) {
    sum_ -= recent_.front();
    recent_.pop_front();
  }
  if (recent_.size() < static_cast<std::size_t>(window_)) return;
  const double ma = sum_ / static_cast<double>(window_);
  // A string of zero returns is indistinguishable from a policy that has
  // never scored, so stability only accrues while the average is nonzero.
  if (prev_ma_ && ma != 0.0) {
    const double denom = std::max(std::abs(*prev_ma_), 1e-12);
    if (std::abs(ma - *prev_ma_) / denom < rel_change_)
      ++stable_;
    else
      stable_ = 0;
    if (stable_ >= span_) converged_ = true;
  } else if (ma == 0.0) {
    stable_ = 0;
  }
  prev_ma_ = ma;
}

double ConvergenceTracker::current_ma() const {
  if (recent_.empty()) return 0.0;
  return sum_ / static_cast<double>(recent_.size());
}

void ConvergenceTracker::reset() {
  recent_.clear();
  sum_ = 0.0;
  prev_ma_.reset();
  stable_ = 0;
  converged_ = false;
}

// --- PhaseReport -------------------------------------------------------------

nlohmann::json PhaseReport::to_json() const {
  return nlohmann::json{{"phase", phase},
                        {"real_steps", real_steps},
                        {"imagined_steps", imagined_steps},
                        {"episodes", episodes},
                        {"policy_updates", policy_updates},
                        {"converged", converged},
                        {"policy_converged_step", policy_converged_step},
                        {"model_converged_step", model_converged_step},
                        {"probe_error", probe_error},
                        {"injected", injected},
                        {"injection_step", injection_step},
                        {"detected", detected},
                        {"detection_step", detection_step},
                        {"rule_count", rule_count}};
}

// --- AdaptationLoop ----------------------------------------------------------

namespace {
PolicyConfig with_action_count(PolicyConfig pc, int action_count) {
  pc.action_count = action_count;
  return pc;
}
}  // namespace

AdaptationLoop::AdaptationLoop(GridEnv& env, AdaptationConfig cfg, std::uint64_t seed,
                               StepSink sink)
    : env_(env),
      cfg_(cfg),
      model_(env.schema(), env.action_count()),
      policy_(with_action_count(cfg.policy, env.action_count()), derive_seed(seed, 0x50)),
      detector_(cfg.detector_threshold),
      buffer_(cfg.buffer_capacity),
      pool_(cfg.pool_capacity),
      stream_(cfg.imagination_horizon),
      mix_(cfg.mix_real_fraction),
      pool_rng_(make_rng(seed, 0xA1)),
      probe_rng_(make_rng(seed, 0xA7)),
      sink_(std::move(sink)) {
  if (cfg.update_period < 1) throw ConfigError("update period must be at least 1");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (cfg.probe_steps < 1) throw ConfigError("probe length must be at least 1");
}

void AdaptationLoop::record_episode(const char* phase, double episode_return,
                                    std::uint64_t length) {
  episodes_.push_back(EpisodeRecord{episodes_.size(), env_.global_steps(), episode_return,
                                    length, phase, policy_.updates_count()});
}

StepEvent AdaptationLoop::make_event(Provenance provenance, int action, double reward,
                                     bool terminal) const {
  StepEvent e;
  e.step = env_.global_steps();
  e.phase = phase_;
  e.provenance = provenance;
  e.action = action;
  e.reward = reward;
  e.terminal = terminal;
  e.rule_count = model_.rule_count();
  e.detections = detector_.detections();
  e.updates = policy_.updates_count();
  return e;
}

double AdaptationLoop::probe_model_error() {
  GridEnv probe_env = env_;
  std::uint64_t misses = 0;
  SymbolicState s = probe_env.reset();
  for (std::uint64_t i = 0; i < cfg_.probe_steps; ++i) {
    const int a = static_cast<int>(
        next_below(probe_rng_, static_cast<std::uint64_t>(probe_env.action_count())));
    const StepResult res = probe_env.step(static_cast<Action>(a));
    const std::optional<Prediction> pred = model_.predict(s, a);
    const bool hit = pred && pred->reward == res.reward && pred->terminal == res.terminated &&
                     pred->next == res.state;
    if (!hit) ++misses;
    s = (res.terminated || res.truncated) ? probe_env.reset() : res.state;
  }
  return static_cast<double>(misses) / static_cast<double>(cfg_.probe_steps);
}

PhaseReport AdaptationLoop::run_pre_novelty() {
  phase_ = "pre";
  PhaseReport rep;
  rep.phase = "pre";
  const std::uint64_t steps0 = env_.global_steps();
  const std::uint64_t updates0 = policy_.updates_count();
  const std::uint64_t episodes0 = episodes_.size();
  ConvergenceTracker tracker(cfg_.convergence_window, cfg_.convergence_span,
                             cfg_.convergence_rel_change);
  int episodes_since_probe = 0;
  double probe_err = 1.0;
  bool model_ok = false;

  while (true) {
    if (env_.global_steps() - steps0 >= cfg_.max_pre_steps)
      throw TimeoutError(
          "pre-novelty training did not converge within " + std::to_string(cfg_.max_pre_steps) +
          " steps (episodes=" + std::to_string(episodes_.size() - episodes0) +
          ", return-ma=" + std::to_string(tracker.current_ma()) +
          ", probe-error=" + std::to_string(probe_err) +
          ", rules=" + std::to_string(model_.rule_count()) + ")");

    SymbolicState s = env_.reset();
    double ret = 0.0;
    std::uint64_t len = 0;
    while (env_.episode_active()) {
      const std::uint64_t ep = env_.episodes_completed();
      const int a = policy_.select_action(s, ActionMode::Explore);
      const StepResult res = env_.step(static_cast<Action>(a));
      model_.update(s, a, res.state, res.reward, res.terminated);
      pool_.push(s);
      policy_.update(
          Transition{s, a, res.state, res.reward, res.terminated, Provenance::Real});
      if (sink_) {
        StepEvent e = make_event(Provenance::Real, a, res.reward, res.terminated);
        e.episode = ep;
        sink_(e);
      }
      ret += res.reward;
      ++len;
      s = res.state;
    }
    record_episode("pre", ret, len);
    tracker.push(ret);

    if (tracker.converged() && rep.policy_converged_step == 0)
      rep.policy_converged_step = env_.global_steps();

    if (++episodes_since_probe >= cfg_.probe_period_episodes) {
      episodes_since_probe = 0;
      probe_err = probe_model_error();
      model_ok = probe_err < cfg_.probe_error_threshold;
      if (model_ok && rep.model_converged_step == 0)
        rep.model_converged_step = env_.global_steps();
      if (!model_ok) rep.model_converged_step = 0;
    }
    if (tracker.converged() && model_ok) break;
  }

  policy_.set_learning(false);
  rep.converged = true;
  rep.probe_error = probe_err;
  rep.real_steps = env_.global_steps() - steps0;
  rep.episodes = episodes_.size() - episodes0;
  rep.policy_updates = policy_.updates_count() - updates0;
  rep.rule_count = model_.rule_count();
  return rep;
}

PhaseReport AdaptationLoop::run_monitor() {
  phase_ = "monitor";
  PhaseReport rep;
  rep.phase = "monitor";
  const std::uint64_t steps0 = env_.global_steps();
  const std::uint64_t episodes0 = episodes_.size();
  detector_.reset();

  while (true) {
    if (env_.injection_due()) {
      env_.inject_novelty();
      injection_step_ = env_.global_steps();
      updates_at_injection_ = policy_.updates_count();
      rep.injected = true;
      rep.injection_step = injection_step_;
    }
    if (detector_.fired()) break;
    if (env_.global_steps() - steps0 >= cfg_.max_monitor_steps) break;

    SymbolicState s = env_.reset();
    double ret = 0.0;
    std::uint64_t len = 0;
    while (env_.episode_active()) {
      const std::uint64_t ep = env_.episodes_completed();
      const int a = policy_.select_action(s, ActionMode::Explore);
      const StepResult res = env_.step(static_cast<Action>(a));
      const std::optional<Prediction> pred = model_.predict(s, a);
      const auto event = detector_.observe(pred, s, res.state, res.reward, res.terminated);
      if (event && detection_step_ == 0) {
        detection_step_ = env_.global_steps();
        rep.detected = true;
        rep.detection_step = detection_step_;
      }
      pool_.push(s);
      if (sink_) {
        StepEvent e = make_event(Provenance::Real, a, res.reward, res.terminated);
        e.episode = ep;
        sink_(e);
      }
      ret += res.reward;
      ++len;
      s = res.state;
    }
    record_episode("monitor", ret, len);
  }

  rep.converged = rep.detected;
  rep.real_steps = env_.global_steps() - steps0;
  rep.episodes = episodes_.size() - episodes0;
  rep.rule_count = model_.rule_count();
  rep.probe_error = 0.0;
  return rep;
}

PhaseReport AdaptationLoop::run_post_novelty() {
  if (!detector_.fired())
    throw ContractError("post-novelty adaptation requires a prior detection");
  phase_ = "post";
  PhaseReport rep;
  rep.phase = "post";
  const std::uint64_t steps0 = env_.global_steps();
  const std::uint64_t updates0 = policy_.updates_count();
  const std::uint64_t episodes0 = episodes_.size();
  const std::uint64_t imagined0 = mix_.imagined_steps();

  policy_.set_learning(true);
  buffer_.clear();
  stream_.reset();
  ConvergenceTracker tracker(cfg_.convergence_window, cfg_.convergence_span,
                             cfg_.convergence_rel_change);
  int since_update = 0;

  while (true) {
    SymbolicState s = env_.reset();
    double ret = 0.0;
    std::uint64_t len = 0;
    while (env_.episode_active()) {
      const std::uint64_t ep = env_.episodes_completed();
      const int a = policy_.select_action(s, ActionMode::Explore);
      const StepResult res = env_.step(static_cast<Action>(a));
      model_.update(s, a, res.state, res.reward, res.terminated);
      pool_.push(s);
      buffer_.push(
          Transition{s, a, res.state, res.reward, res.terminated, Provenance::Real});
      if (sink_) {
        StepEvent e = make_event(Provenance::Real, a, res.reward, res.terminated);
        e.episode = ep;
        sink_(e);
      }

      const int owed = mix_.on_real_step();
      for (int k = 0; k < owed; ++k) {
        Transition t = stream_.next(model_, policy_, pool_, pool_rng_);
        if (sink_) {
          StepEvent e = make_event(Provenance::Imagined, t.action, t.reward, t.terminal);
          e.episode = ep;
          sink_(e);
        }
        buffer_.push(std::move(t));
      }

      if (++since_update >= cfg_.update_period) {
        policy_.update_from_buffer(buffer_, cfg_.batch_size);
        since_update = 0;
      }
      ret += res.reward;
      ++len;
      s = res.state;
    }
    record_episode("post", ret, len);
    tracker.push(ret);
    if (tracker.converged()) {
      rep.converged = true;
      break;
    }
    if (env_.global_steps() - steps0 >= cfg_.max_post_steps) break;
  }

  rep.real_steps = env_.global_steps() - steps0;
  rep.imagined_steps = mix_.imagined_steps() - imagined0;
  rep.episodes = episodes_.size() - episodes0;
  rep.policy_updates = policy_.updates_count() - updates0;
  rep.rule_count = model_.rule_count();
  rep.probe_error = 0.0;
  return rep;
}

// --- BaselineLoop ------------------------------------------------------------

BaselineLoop::BaselineLoop(GridEnv& env, AdaptationConfig cfg, std::uint64_t seed, StepSink sink)
    : env_(env),
      cfg_(cfg),
      policy_(with_action_count(cfg.policy, env.action_count()), derive_seed(seed, 0x50)),
      sink_(std::move(sink)) {}

void BaselineLoop::record_episode(const char* phase, double episode_return,
                                  std::uint64_t length) {
  episodes_.push_back(EpisodeRecord{episodes_.size(), env_.global_steps(), episode_return,
                                    length, phase, policy_.updates_count()});
}

PhaseReport BaselineLoop::run_phase(const char* phase) {
  PhaseReport rep;
  rep.phase = phase;
  const bool pre = std::string_view(phase) == "pre";
  const std::uint64_t steps0 = env_.global_steps();
  const std::uint64_t updates0 = policy_.updates_count();
  const std::uint64_t episodes0 = episodes_.size();
  ConvergenceTracker tracker(cfg_.convergence_window, cfg_.convergence_span,
                             cfg_.convergence_rel_change);

  while (true) {
    if (pre && env_.injection_due()) {
      env_.inject_novelty();
      injection_step_ = env_.global_steps();
      updates_at_injection_ = policy_.updates_count();
      rep.injected = true;
      rep.injection_step = injection_step_;
      rep.converged = true;
      break;
    }
    const std::uint64_t budget = pre ? cfg_.max_pre_steps : cfg_.max_post_steps;
    if (env_.global_steps() - steps0 >= budget) {
      if (pre && env_.novelty().kind != NoveltyKind::None)
        throw TimeoutError("novelty injection threshold not reached within " +
                           std::to_string(budget) + " baseline steps");
      break;
    }

    SymbolicState s = env_.reset();
    double ret = 0.0;
    std::uint64_t len = 0;
    while (env_.episode_active()) {
      const std::uint64_t ep = env_.episodes_completed();
      const int a = policy_.select_action(s, ActionMode::Explore);
      const StepResult res = env_.step(static_cast<Action>(a));
      policy_.update(
          Transition{s, a, res.state, res.reward, res.terminated, Provenance::Real});
      if (sink_) {
        StepEvent e;
        e.step = env_.global_steps();
        e.episode = ep;
        e.phase = phase;
        e.provenance = Provenance::Real;
        e.action = a;
        e.reward = res.reward;
        e.terminal = res.terminated;
        e.rule_count = 0;
        e.detections = 0;
        e.updates = policy_.updates_count();
        sink_(e);
      }
      ret += res.reward;
      ++len;
      s = res.state;
    }
    record_episode(phase, ret, len);
    tracker.push(ret);
    if (!pre && tracker.converged()) {
      rep.converged = true;
      break;
    }
  }

  rep.real_steps = env_.global_steps() - steps0;
  rep.episodes = episodes_.size() - episodes0;
  rep.policy_updates = policy_.updates_count() - updates0;
  return rep;
}

PhaseReport BaselineLoop::run_pre() { return run_phase("pre"); }

PhaseReport BaselineLoop::run_post() {
  if (injection_step_ == 0) {
    PhaseReport rep;
    rep.phase = "post";
    return rep;
  }
  return run_phase("post");
}

}  // namespace worldcloner
