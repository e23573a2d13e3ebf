#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "worldcloner/feature.hpp"
#include "worldcloner/rng.hpp"

namespace worldcloner {

// ---------------------------------------------------------------------------
// Actions and environment configuration
// ---------------------------------------------------------------------------

enum class Action : int { TurnLeft = 0, TurnRight, Forward, Pickup, Drop, Toggle };
inline constexpr int kGridActionCount = 6;

const char* action_name(Action a);
std::optional<Action> action_from_name(std::string_view name);

enum class EnvName { Empty, DoorKey, LavaShortcutMaze };
std::optional<EnvName> env_from_name(std::string_view name);
const char* env_name_string(EnvName n);

enum class NoveltyKind { None, DoorKeyChange, LavaProof, LavaHurts };
std::optional<NoveltyKind> novelty_from_name(std::string_view name);
const char* novelty_name_string(NoveltyKind k);

// When to inject: at the first episode boundary once the global step count
// (or completed-episode count) reaches inject_at.
struct NoveltySpec {
  NoveltyKind kind = NoveltyKind::None;
  std::uint64_t inject_at = 0;
  bool by_episodes = false;
};

enum class LavaConfig { Harmless, Terminal };
enum class KeyColor { Yellow, Blue };

struct StartPose {
  int row = 1, col = 1;
  int facing = 1;  // 0 North, 1 East, 2 South, 3 West
};

struct StepResult {
  SymbolicState state;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
};

// ---------------------------------------------------------------------------
// Grid environment
// ---------------------------------------------------------------------------

// Deterministic, fully observable grid world in the MiniGrid style. Positions
// are (row, col); facing East increments col, South increments row. Layouts
// are fixed per environment name; the seed only picks the agent start pose
// from a small per-layout start set on each reset. Reward is sparse and
// constant: +1 for entering the goal (terminal), -1 for entering lava when
// lava is Terminal (also terminal), 0 otherwise. Episodes truncate at
// max_steps = 4 * width * height without a terminal flag.
//
// The declared novelty is injected exactly once, at an episode boundary, and
// never changes the symbolic observation space: DoorKeyChange switches which
// key color unlocks the door; LavaProof switches lava Terminal -> Harmless;
// LavaHurts switches lava Harmless -> Terminal.
class GridEnv {
 public:
  static GridEnv build(EnvName name, NoveltySpec novelty, std::uint64_t seed);

  // Test and tooling constructor: layout from ASCII art. Legend: '#' wall,
  // '.' floor, 'L' lava, 'G' goal, 'D' door (starts Locked), 'y'/'b' keys.
  static GridEnv from_ascii(std::string_view art, std::vector<StartPose> starts,
                            KeyColor door_key = KeyColor::Yellow,
                            LavaConfig lava = LavaConfig::Terminal,
                            NoveltySpec novelty = NoveltySpec{}, std::uint64_t seed = 0);

  // Starts a fresh episode and returns its initial state.
  SymbolicState reset();

  // Advances one step. Raises ContractError when no episode is active
  // (before the first reset, or after a terminal/truncated step).
  StepResult step(Action a);

  // Current state as seen by the learner. Injective over reachable states.
  SymbolicState observe_symbolic() const;

  // Episode-boundary novelty injection. injection_due() turns true once the
  // configured threshold has been crossed and no episode is in flight;
  // inject_novelty() outside that window (or twice, or with kind None) raises
  // ContractError.
  bool injection_due() const;
  void inject_novelty();
  bool novelty_injected() const { return injected_; }
  const NoveltySpec& novelty() const { return novelty_; }

  // Restores the dynamic portion of the world (agent, door, keys, inventory)
  // from a symbolic state previously produced by observe_symbolic. Restoring
  // a terminal or inconsistent state raises ContractError. Test support.
  void restore(const SymbolicState& s);

  const SchemaPtr& schema() const { return schema_; }
  int action_count() const { return kGridActionCount; }
  int width() const { return width_; }
  int height() const { return height_; }
  std::uint64_t max_steps() const { return max_steps_; }
  std::uint64_t global_steps() const { return global_steps_; }
  std::uint64_t episodes_completed() const { return episodes_completed_; }
  bool episode_active() const { return in_episode_; }
  LavaConfig lava_config() const { return lava_config_; }

  // One character per cell, agent drawn as ^ > v < over its cell.
  std::string render() const;

  // Static layout plus dynamic state, self-describing.
  nlohmann::json layout_json() const;

 private:
  enum class Base : std::uint8_t { Floor, Wall, Lava, Goal };
  enum class KeyWhere : std::uint8_t { OnGrid, Held, Gone };
  struct DoorInfo {
    int row = 0, col = 0;
    int state = 0;  // symbol id: 0 Locked, 1 Closed, 2 Open
    KeyColor required = KeyColor::Yellow;
  };
  struct KeyInfo {
    KeyColor color = KeyColor::Yellow;
    int spawn_row = 0, spawn_col = 0;
    KeyWhere where = KeyWhere::OnGrid;
    int row = 0, col = 0;
  };

  GridEnv() = default;
  void build_schema();
  Base base_at(int r, int c) const { return grid_[static_cast<std::size_t>(r * width_ + c)]; }
  const KeyInfo* key_at(int r, int c) const;
  KeyInfo* key_at(int r, int c);
  bool is_door(int r, int c) const { return door_ && door_->row == r && door_->col == c; }
  std::int32_t cell_ahead_symbol() const;
  std::int32_t floor_cell_symbol(std::size_t feature, int r, int c) const;
  void end_episode();

  std::string name_ = "custom";
  int width_ = 0, height_ = 0;
  std::vector<Base> grid_;
  std::optional<DoorInfo> door_;
  std::vector<KeyInfo> keys_;
  int goal_row_ = 0, goal_col_ = 0;
  LavaConfig lava_config_ = LavaConfig::Terminal;
  bool has_lava_ = false;

  std::vector<StartPose> starts_;
  NoveltySpec novelty_;
  bool injected_ = false;

  int agent_row_ = 1, agent_col_ = 1, agent_facing_ = 1;
  int inventory_ = 0;  // symbol id in {None, YellowKey, BlueKey}
  bool in_episode_ = false;
  std::uint64_t step_count_ = 0;
  std::uint64_t max_steps_ = 0;
  std::uint64_t global_steps_ = 0;
  std::uint64_t episodes_completed_ = 0;

  Rng rng_{0};
  SchemaPtr schema_;

  // Feature indices resolved once at schema build.
  std::size_t f_agent_loc_ = 0, f_facing_ = 0, f_cell_ahead_ = 0;
  std::optional<std::size_t> f_inventory_, f_door_state_, f_door_loc_;
  std::optional<std::size_t> f_key_loc_[2];  // indexed by KeyColor
  std::size_t f_goal_loc_ = 0;
  std::optional<std::size_t> f_lava_region_;

  // Symbol ids resolved once at schema build.
  std::vector<std::int32_t> cell_symbol_;         // r * width + c -> key-location symbol
  std::vector<std::pair<int, int>> symbol_cell_;  // inverse of cell_symbol_
  std::int32_t sym_wall_ = -1, sym_floor_ = -1, sym_lava_ = -1, sym_goal_ = -1;
  std::int32_t sym_door_locked_ = -1, sym_door_closed_ = -1, sym_door_open_ = -1;
  std::int32_t sym_key_yellow_ = -1, sym_key_blue_ = -1;
  std::int32_t sym_inv_yellow_ = -1, sym_inv_blue_ = -1;
};

}  // namespace worldcloner
