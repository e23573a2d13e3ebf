#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "worldcloner/feature.hpp"
#include "worldcloner/grid_env.hpp"
#include "worldcloner/metrics.hpp"
#include "worldcloner/novelty_detector.hpp"
#include "worldcloner/policy.hpp"
#include "worldcloner/rng.hpp"
#include "worldcloner/rule_model.hpp"

namespace worldcloner {

// Integer-exact real/imagined step accounting. real_fraction r is reduced to
// a rational i:r of imagined to real steps; every real step accrues the
// imagined numerator and flushes whole imagined steps, so the realized ratio
// never drifts more than one step from the target.
class MixSchedule {
 public:
  explicit MixSchedule(double real_fraction);

  // Registers one real step; returns the number of imagined steps now owed.
  int on_real_step();

  double real_fraction() const { return target_real_; }
  double imagined_fraction() const { return 1.0 - target_real_; }
  std::uint64_t real_steps() const { return real_steps_; }
  std::uint64_t imagined_steps() const { return imagined_steps_; }

 private:
  double target_real_;
  std::uint64_t num_real_, num_imagined_;
  std::uint64_t carry_ = 0;
  std::uint64_t real_steps_ = 0, imagined_steps_ = 0;
};

// Bounded FIFO of recently visited real states; imagined rollouts start here.
class StartStatePool {
 public:
  explicit StartStatePool(std::size_t capacity = 1024);

  void push(const SymbolicState& s);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const SymbolicState& sample(Rng& rng) const;  // uniform; ContractError when empty

 private:
  std::size_t capacity_;
  std::vector<SymbolicState> items_;  // ring once full
  std::size_t head_ = 0;
};

// One imagined step: policy action (Explore mode), model prediction. An
// uncovered (state, action) yields a conservative zero-reward self-loop.
Transition imagined_step(const RuleModel& model, TabularQPolicy& policy,
                         const SymbolicState& state);

// Contiguous imagined trajectory of up to `horizon` steps, stopping early on
// a terminal effect.
std::vector<Transition> imagine_rollout(const RuleModel& model, TabularQPolicy& policy,
                                        const SymbolicState& start, int horizon);

// Resumable rollout stream: emits one imagined transition per call, starting
// a fresh rollout from the pool whenever the previous one hit its horizon or
// a terminal effect. Spreading a rollout across calls lets each imagined
// step see the newest rules while keeping trajectories contiguous.
class ImaginationStream {
 public:
  explicit ImaginationStream(int horizon);

  Transition next(const RuleModel& model, TabularQPolicy& policy, const StartStatePool& pool,
                  Rng& rng);
  void reset();

 private:
  int horizon_;
  std::optional<SymbolicState> state_;
  int used_ = 0;
};

// Episode-return stability: converged once the `window`-episode moving
// average changes by less than rel_change (relative) for `span` consecutive
// episodes.
class ConvergenceTracker {
 public:
  ConvergenceTracker(int window, int span, double rel_change);

  void push(double episode_return);
  bool converged() const { return converged_; }
  double current_ma() const;
  void reset();

 private:
  int window_, span_;
  double rel_change_;
  std::deque<double> recent_;
  double sum_ = 0.0;
  std::optional<double> prev_ma_;
  int stable_ = 0;
  bool converged_ = false;
};

struct AdaptationConfig {
  PolicyConfig policy;  // action_count is filled in from the environment

  double mix_real_fraction = 0.60;
  int imagination_horizon = 32;
  std::size_t buffer_capacity = 4096;
  std::size_t pool_capacity = 1024;
  int update_period = 4;       // real steps between batched policy updates
  std::size_t batch_size = 8;  // transitions sampled per batched update
  int detector_threshold = 2;

  std::uint64_t max_pre_steps = 200000;
  std::uint64_t max_monitor_steps = 400000;
  std::uint64_t max_post_steps = 300000;

  int convergence_window = 50;
  int convergence_span = 100;
  double convergence_rel_change = 0.01;

  double probe_error_threshold = 0.01;
  std::uint64_t probe_steps = 1000;
  int probe_period_episodes = 10;
};

struct PhaseReport {
  std::string phase;
  std::uint64_t real_steps = 0;
  std::uint64_t imagined_steps = 0;
  std::uint64_t episodes = 0;
  std::uint64_t policy_updates = 0;  // updates_count delta across the phase
  bool converged = false;

  // pre phase
  std::uint64_t policy_converged_step = 0;
  std::uint64_t model_converged_step = 0;
  double probe_error = 1.0;

  // monitor phase
  bool injected = false;
  std::uint64_t injection_step = 0;
  bool detected = false;
  std::uint64_t detection_step = 0;

  std::size_t rule_count = 0;

  nlohmann::json to_json() const;
};

// One row of the per-step event log (both real and imagined steps).
struct StepEvent {
  std::uint64_t step = 0;     // global real environment steps so far
  std::uint64_t episode = 0;  // episodes completed before this step
  const char* phase = "pre";
  Provenance provenance = Provenance::Real;
  int action = 0;
  double reward = 0.0;
  bool terminal = false;
  std::size_t rule_count = 0;
  std::uint64_t detections = 0;
  std::uint64_t updates = 0;
};
using StepSink = std::function<void(const StepEvent&)>;

// The world-model agent's three-phase lifecycle against one environment:
//
//   pre      learn rules and Q-values online until episode returns are
//            stable and the model passes a random-policy prediction probe;
//            then freeze both.
//   monitor  act frozen; inject the configured novelty once due; watch the
//            detector until it fires (or the step budget runs out).
//   post     unfreeze; per real step the rule model updates first, then the
//            mixing schedule's owed imagined steps extend the update buffer,
//            and the policy trains from buffer samples on a fixed period;
//            ends on the same stability criterion.
class AdaptationLoop {
 public:
  AdaptationLoop(GridEnv& env, AdaptationConfig cfg, std::uint64_t seed, StepSink sink = {});

  PhaseReport run_pre_novelty();
  PhaseReport run_monitor();
  PhaseReport run_post_novelty();

  RuleModel& model() { return model_; }
  const RuleModel& model() const { return model_; }
  TabularQPolicy& policy() { return policy_; }
  NoveltyDetector& detector() { return detector_; }
  const std::vector<EpisodeRecord>& episodes() const { return episodes_; }
  std::uint64_t injection_step() const { return injection_step_; }
  std::uint64_t detection_step() const { return detection_step_; }
  std::uint64_t updates_at_injection() const { return updates_at_injection_; }

  // Fraction of probe steps whose prediction misses (Unknown counts as a
  // miss), measured on a throwaway copy of the environment.
  double probe_model_error();

 private:
  void record_episode(const char* phase, double episode_return, std::uint64_t length);
  StepEvent make_event(Provenance provenance, int action, double reward, bool terminal) const;

  GridEnv& env_;
  AdaptationConfig cfg_;
  RuleModel model_;
  TabularQPolicy policy_;
  NoveltyDetector detector_;
  UpdateBuffer buffer_;
  StartStatePool pool_;
  ImaginationStream stream_;
  MixSchedule mix_;
  Rng pool_rng_;
  Rng probe_rng_;
  StepSink sink_;

  const char* phase_ = "pre";
  std::vector<EpisodeRecord> episodes_;
  std::uint64_t injection_step_ = 0;
  std::uint64_t detection_step_ = 0;
  std::uint64_t updates_at_injection_ = 0;
};

// The model-free comparison agent: identical policy learner, learning always
// on, one online Q-write per real step, no rule model, no imagination.
class BaselineLoop {
 public:
  BaselineLoop(GridEnv& env, AdaptationConfig cfg, std::uint64_t seed, StepSink sink = {});

  // Runs until the novelty injection is due (then injects), or until the
  // pre-step budget runs out for novelty-free configurations.
  PhaseReport run_pre();

  // Continues after injection until return stability or the post budget.
  PhaseReport run_post();

  TabularQPolicy& policy() { return policy_; }
  const std::vector<EpisodeRecord>& episodes() const { return episodes_; }
  std::uint64_t injection_step() const { return injection_step_; }
  std::uint64_t updates_at_injection() const { return updates_at_injection_; }

 private:
  PhaseReport run_phase(const char* phase);
  void record_episode(const char* phase, double episode_return, std::uint64_t length);

  GridEnv& env_;
  AdaptationConfig cfg_;
  TabularQPolicy policy_;
  StepSink sink_;

  std::vector<EpisodeRecord> episodes_;
  std::uint64_t injection_step_ = 0;
  std::uint64_t updates_at_injection_ = 0;
};

}  // namespace worldcloner
