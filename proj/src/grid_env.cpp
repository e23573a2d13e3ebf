#include "worldcloner/grid_env.hpp"

#include <algorithm>
#include <sstream>

#include "worldcloner/errors.hpp"

namespace worldcloner {

namespace {

constexpr int kDrByFacing[4] = {-1, 0, 1, 0};  // North, East, South, West
constexpr int kDcByFacing[4] = {0, 1, 0, -1};

constexpr std::string_view kEmptyArt =
    "########\n"
    "#......#\n"
    "#......#\n"
    "#......#\n"
    "#......#\n"
    "#......#\n"
    "#.....G#\n"
    "########\n";

constexpr std::string_view kDoorKeyArt =
    "########\n"
    "#.y#...#\n"
    "#..D.G.#\n"
    "#.b#...#\n"
    "#..#...#\n"
    "#..#...#\n"
    "#..#...#\n"
    "########\n";

constexpr std::string_view kLavaMazeArt =
    "########\n"
    "#...L.G#\n"
    "#...L..#\n"
    "#...L..#\n"
    "#...L..#\n"
    "#...L..#\n"
    "#......#\n"
    "########\n";

const std::vector<StartPose> kEmptyStarts = {{1, 1, 1}, {1, 1, 2}, {3, 1, 2}};
const std::vector<StartPose> kDoorKeyStarts = {{2, 1, 1}, {1, 1, 2}, {5, 5, 0}};
const std::vector<StartPose> kLavaMazeStarts = {{1, 1, 1}, {2, 1, 2}, {5, 6, 0}};

}  // namespace

const char* action_name(Action a) {
  switch (a) {
    case Action::TurnLeft: return "turnleft";
    case Action::TurnRight: return "turnright";
    case Action::Forward: return "forward";
    case Action::Pickup: return "pickup";
    case Action::Drop: return "drop";
    case Action::Toggle: return "toggle";
  }
  return "?";
}

std::optional<Action> action_from_name(std::string_view name) {
  for (int i = 0; i < kGridActionCount; ++i)
    if (name == action_name(static_cast<Action>(i))) return static_cast<Action>(i);
  return std::nullopt;
}

std::optional<EnvName> env_from_name(std::string_view name) {
  if (name == "empty") return EnvName::Empty;
  if (name == "doorkey") return EnvName::DoorKey;
  if (name == "lavamaze") return EnvName::LavaShortcutMaze;
  return std::nullopt;
}

const char* env_name_string(EnvName n) {
  switch (n) {
    case EnvName::Empty: return "empty";
    case EnvName::DoorKey: return "doorkey";
    case EnvName::LavaShortcutMaze: return "lavamaze";
  }
  return "?";
}

std::optional<NoveltyKind> novelty_from_name(std::string_view name) {
  if (name == "none") return NoveltyKind::None;
  if (name == "doorkeychange") return NoveltyKind::DoorKeyChange;
  if (name == "lavaproof") return NoveltyKind::LavaProof;
  if (name == "lavahurts") return NoveltyKind::LavaHurts;
  return std::nullopt;
}

const char* novelty_name_string(NoveltyKind k) {
  switch (k) {
    case NoveltyKind::None: return "none";
    case NoveltyKind::DoorKeyChange: return "doorkeychange";
    case NoveltyKind::LavaProof: return "lavaproof";
    case NoveltyKind::LavaHurts: return "lavahurts";
  }
  return "?";
}

// --- construction ----------------------------------------------------------

GridEnv GridEnv::from_ascii(std::string_view art, std::vector<StartPose> starts,
                            KeyColor door_key, LavaConfig lava, NoveltySpec novelty,
                            std::uint64_t seed) {
  std::vector<std::string> rows;
  {
    std::string line;
    std::istringstream in{std::string(art)};
    while (std::getline(in, line))
      if (!line.empty()) rows.push_back(line);
  }
  if (rows.size() < 3) throw ConfigError("layout needs at least 3 rows");
  const std::size_t width = rows[0].size();
  if (width < 3) throw ConfigError("layout needs at least 3 columns");
  for (const auto& row : rows)
    if (row.size() != width) throw ConfigError("layout rows differ in length");

  GridEnv env;
  env.height_ = static_cast<int>(rows.size());
  env.width_ = static_cast<int>(width);
  env.grid_.assign(static_cast<std::size_t>(env.height_ * env.width_), Base::Floor);
  int goals = 0;

  for (int r = 0; r < env.height_; ++r) {
    for (int c = 0; c < env.width_; ++c) {
      const char ch = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      const bool border = r == 0 || c == 0 || r == env.height_ - 1 || c == env.width_ - 1;
      Base base = Base::Floor;
      switch (ch) {
        case '#': base = Base::Wall; break;
        case '.': base = Base::Floor; break;
        case 'L': base = Base::Lava; env.has_lava_ = true; break;
        case 'G': base = Base::Goal; env.goal_row_ = r; env.goal_col_ = c; ++goals; break;
        case 'D':
          if (env.door_) throw ConfigError("layout has more than one door");
          env.door_ = DoorInfo{r, c, 0, door_key};
          break;
        case 'y':
        case 'b': {
          const KeyColor color = ch == 'y' ? KeyColor::Yellow : KeyColor::Blue;
          for (const KeyInfo& k : env.keys_)
            if (k.color == color) throw ConfigError("layout repeats a key color");
          env.keys_.push_back(KeyInfo{color, r, c, KeyWhere::OnGrid, r, c});
          break;
        }
        default:
          throw ConfigError(std::string("unknown layout character: ") + ch);
      }
      if (border && ch != '#') throw ConfigError("layout border must be wall");
      env.grid_[static_cast<std::size_t>(r * env.width_ + c)] = base;
    }
  }
  if (goals != 1) throw ConfigError("layout needs exactly one goal");
  std::sort(env.keys_.begin(), env.keys_.end(),
            [](const KeyInfo& a, const KeyInfo& b) { return a.color < b.color; });

  if (starts.empty()) throw ConfigError("layout needs at least one start pose");
  for (const StartPose& p : starts) {
    if (p.row <= 0 || p.col <= 0 || p.row >= env.height_ - 1 || p.col >= env.width_ - 1 ||
        p.facing < 0 || p.facing > 3)
      throw ConfigError("start pose out of bounds");
    if (env.base_at(p.row, p.col) != Base::Floor || env.key_at(p.row, p.col) ||
        env.is_door(p.row, p.col))
      throw ConfigError("start pose must be on empty floor");
  }
  env.starts_ = std::move(starts);

  env.lava_config_ = lava;
  env.novelty_ = novelty;
  switch (novelty.kind) {
    case NoveltyKind::None:
      break;
    case NoveltyKind::DoorKeyChange: {
      if (!env.door_) throw ConfigError("doorkeychange needs a door");
      bool has_other = false;
      for (const KeyInfo& k : env.keys_)
        if (k.color != env.door_->required) has_other = true;
      if (!has_other) throw ConfigError("doorkeychange needs a key of the other color");
      break;
    }
    case NoveltyKind::LavaProof:
      if (!env.has_lava_) throw ConfigError("lavaproof needs lava");
      env.lava_config_ = LavaConfig::Terminal;
      break;
    case NoveltyKind::LavaHurts:
      if (!env.has_lava_) throw ConfigError("lavahurts needs lava");
      env.lava_config_ = LavaConfig::Harmless;
      break;
  }

  env.max_steps_ = static_cast<std::uint64_t>(4 * env.width_ * env.height_);
  env.rng_ = make_rng(seed, 0xE7);
  env.build_schema();
  return env;
}

GridEnv GridEnv::build(EnvName name, NoveltySpec novelty, std::uint64_t seed) {
  GridEnv env;
  switch (name) {
    case EnvName::Empty:
      if (novelty.kind != NoveltyKind::None)
        throw ConfigError("the empty grid supports no novelty");
      env = from_ascii(kEmptyArt, kEmptyStarts, KeyColor::Yellow, LavaConfig::Terminal, novelty,
                       seed);
      break;
    case EnvName::DoorKey:
      if (novelty.kind == NoveltyKind::LavaProof || novelty.kind == NoveltyKind::LavaHurts)
        throw ConfigError("doorkey has no lava");
      env = from_ascii(kDoorKeyArt, kDoorKeyStarts, KeyColor::Yellow, LavaConfig::Terminal,
                       novelty, seed);
      break;
    case EnvName::LavaShortcutMaze:
      if (novelty.kind == NoveltyKind::DoorKeyChange)
        throw ConfigError("lavamaze has no door");
      env = from_ascii(kLavaMazeArt, kLavaMazeStarts, KeyColor::Yellow,
                       novelty.kind == NoveltyKind::LavaHurts ? LavaConfig::Harmless
                                                              : LavaConfig::Terminal,
                       novelty, seed);
      break;
  }
  env.name_ = env_name_string(name);
  return env;
}

// --- schema ----------------------------------------------------------------

void GridEnv::build_schema() {
  std::vector<FeatureSpec> specs;

  specs.push_back(FeatureSpec::interval("AgentLocation", {1, 1}, {height_ - 2, width_ - 2}));
  f_agent_loc_ = 0;

  specs.push_back(FeatureSpec::categorical("AgentFacing", {"North", "East", "South", "West"}));
  f_facing_ = 1;

  std::vector<std::string> ahead = {"Wall", "Floor", "Goal"};
  if (has_lava_) ahead.push_back("Lava");
  if (door_) {
    ahead.push_back("DoorLocked");
    ahead.push_back("DoorClosed");
    ahead.push_back("DoorOpen");
  }
  bool have_yellow = false, have_blue = false;
  for (const KeyInfo& k : keys_) (k.color == KeyColor::Yellow ? have_yellow : have_blue) = true;
  if (have_yellow) ahead.push_back("KeyYellow");
  if (have_blue) ahead.push_back("KeyBlue");
  specs.push_back(FeatureSpec::categorical("CellAhead", std::move(ahead)));
  f_cell_ahead_ = 2;

  if (!keys_.empty()) {
    std::vector<std::string> inv = {"None"};
    if (have_yellow) inv.push_back("YellowKey");
    if (have_blue) inv.push_back("BlueKey");
    specs.push_back(FeatureSpec::categorical("Inventory", std::move(inv)));
    f_inventory_ = specs.size() - 1;
  }

  if (door_) {
    specs.push_back(FeatureSpec::categorical("DoorState", {"Locked", "Closed", "Open"}));
    f_door_state_ = specs.size() - 1;
    specs.push_back(FeatureSpec::interval("DoorLocation", {door_->row, door_->col},
                                          {door_->row, door_->col}));
    f_door_loc_ = specs.size() - 1;
  }

  // Key location domains: Held, Gone, then every floor cell the key could
  // rest on, in row-major order.
  if (!keys_.empty()) {
    cell_symbol_.assign(static_cast<std::size_t>(width_ * height_), -1);
    std::vector<std::string> locs = {"Held", "Gone"};
    symbol_cell_ = {{-1, -1}, {-1, -1}};
    for (int r = 1; r < height_ - 1; ++r) {
      for (int c = 1; c < width_ - 1; ++c) {
        if (base_at(r, c) != Base::Floor || is_door(r, c)) continue;
        cell_symbol_[static_cast<std::size_t>(r * width_ + c)] =
            static_cast<std::int32_t>(locs.size());
        locs.push_back("r" + std::to_string(r) + "c" + std::to_string(c));
        symbol_cell_.emplace_back(r, c);
      }
    }
    for (const KeyInfo& k : keys_) {
      const char* color = k.color == KeyColor::Yellow ? "KeyYellowLocation" : "KeyBlueLocation";
      specs.push_back(FeatureSpec::categorical(color, locs));
      f_key_loc_[static_cast<int>(k.color)] = specs.size() - 1;
    }
  }

  specs.push_back(FeatureSpec::interval("GoalLocation", {goal_row_, goal_col_},
                                        {goal_row_, goal_col_}));
  f_goal_loc_ = specs.size() - 1;

  if (has_lava_) {
    specs.push_back(FeatureSpec::categorical("LavaRegion", {"Present"}));
    f_lava_region_ = specs.size() - 1;
  }

  schema_ = std::make_shared<const FeatureSchema>(std::move(specs));

  sym_wall_ = schema_->symbol_id(f_cell_ahead_, "Wall");
  sym_floor_ = schema_->symbol_id(f_cell_ahead_, "Floor");
  sym_goal_ = schema_->symbol_id(f_cell_ahead_, "Goal");
  if (has_lava_) sym_lava_ = schema_->symbol_id(f_cell_ahead_, "Lava");
  if (door_) {
    sym_door_locked_ = schema_->symbol_id(f_cell_ahead_, "DoorLocked");
    sym_door_closed_ = schema_->symbol_id(f_cell_ahead_, "DoorClosed");
    sym_door_open_ = schema_->symbol_id(f_cell_ahead_, "DoorOpen");
  }
  if (have_yellow) sym_key_yellow_ = schema_->symbol_id(f_cell_ahead_, "KeyYellow");
  if (have_blue) sym_key_blue_ = schema_->symbol_id(f_cell_ahead_, "KeyBlue");
  if (f_inventory_) {
    if (have_yellow) sym_inv_yellow_ = schema_->symbol_id(*f_inventory_, "YellowKey");
    if (have_blue) sym_inv_blue_ = schema_->symbol_id(*f_inventory_, "BlueKey");
  }
}

// --- cell helpers ----------------------------------------------------------

const GridEnv::KeyInfo* GridEnv::key_at(int r, int c) const {
  for (const KeyInfo& k : keys_)
    if (k.where == KeyWhere::OnGrid && k.row == r && k.col == c) return &k;
  return nullptr;
}

GridEnv::KeyInfo* GridEnv::key_at(int r, int c) {
  return const_cast<KeyInfo*>(static_cast<const GridEnv*>(this)->key_at(r, c));
}

std::int32_t GridEnv::cell_ahead_symbol() const {
  const int r = agent_row_ + kDrByFacing[agent_facing_];
  const int c = agent_col_ + kDcByFacing[agent_facing_];
  if (r < 0 || c < 0 || r >= height_ || c >= width_) return sym_wall_;
  if (const KeyInfo* k = key_at(r, c))
    return k->color == KeyColor::Yellow ? sym_key_yellow_ : sym_key_blue_;
  if (is_door(r, c)) {
    if (door_->state == 0) return sym_door_locked_;
    return door_->state == 1 ? sym_door_closed_ : sym_door_open_;
  }
  switch (base_at(r, c)) {
    case Base::Wall: return sym_wall_;
    case Base::Lava: return sym_lava_;
    case Base::Goal: return sym_goal_;
    case Base::Floor: return sym_floor_;
  }
  return sym_wall_;
}

std::int32_t GridEnv::floor_cell_symbol(std::size_t, int r, int c) const {
  const std::int32_t sym = cell_symbol_[static_cast<std::size_t>(r * width_ + c)];
  if (sym < 0) throw InvariantViolation("key rests on a non-floor cell");
  return sym;
}

// --- observation -----------------------------------------------------------

SymbolicState GridEnv::observe_symbolic() const {
  std::vector<std::int32_t> data(schema_->flat_size(), 0);
  data[schema_->data_offset(f_agent_loc_)] = agent_row_;
  data[schema_->data_offset(f_agent_loc_) + 1] = agent_col_;
  data[schema_->data_offset(f_facing_)] = agent_facing_;
  data[schema_->data_offset(f_cell_ahead_)] = cell_ahead_symbol();
  if (f_inventory_) data[schema_->data_offset(*f_inventory_)] = inventory_;
  if (f_door_state_) data[schema_->data_offset(*f_door_state_)] = door_->state;
  if (f_door_loc_) {
    data[schema_->data_offset(*f_door_loc_)] = door_->row;
    data[schema_->data_offset(*f_door_loc_) + 1] = door_->col;
  }
  for (const KeyInfo& k : keys_) {
    const std::size_t f = *f_key_loc_[static_cast<int>(k.color)];
    std::int32_t sym = 0;
    switch (k.where) {
      case KeyWhere::Held: sym = 0; break;
      case KeyWhere::Gone: sym = 1; break;
      case KeyWhere::OnGrid: sym = floor_cell_symbol(f, k.row, k.col); break;
    }
    data[schema_->data_offset(f)] = sym;
  }
  data[schema_->data_offset(f_goal_loc_)] = goal_row_;
  data[schema_->data_offset(f_goal_loc_) + 1] = goal_col_;
  if (f_lava_region_) data[schema_->data_offset(*f_lava_region_)] = 0;
  return SymbolicState(schema_, std::move(data));
}

// --- episode control -------------------------------------------------------

SymbolicState GridEnv::reset() {
  for (KeyInfo& k : keys_) {
    k.where = KeyWhere::OnGrid;
    k.row = k.spawn_row;
    k.col = k.spawn_col;
  }
  if (door_) door_->state = 0;
  inventory_ = 0;
  const StartPose& p = starts_[next_below(rng_, starts_.size())];
  agent_row_ = p.row;
  agent_col_ = p.col;
  agent_facing_ = p.facing;
  step_count_ = 0;
  in_episode_ = true;
  return observe_symbolic();
}

void GridEnv::end_episode() {
  in_episode_ = false;
  episodes_completed_ += 1;
}

StepResult GridEnv::step(Action a) {
  if (!in_episode_)
    throw ContractError("step without an active episode; call reset first");

  double reward = 0.0;
  bool terminated = false;

  const int ahead_r = agent_row_ + kDrByFacing[agent_facing_];
  const int ahead_c = agent_col_ + kDcByFacing[agent_facing_];

  switch (a) {
    case Action::TurnLeft:
      agent_facing_ = (agent_facing_ + 3) % 4;
      break;
    case Action::TurnRight:
      agent_facing_ = (agent_facing_ + 1) % 4;
      break;
    case Action::Forward: {
      if (key_at(ahead_r, ahead_c)) break;
      if (is_door(ahead_r, ahead_c)) {
        if (door_->state == 2) {
          agent_row_ = ahead_r;
          agent_col_ = ahead_c;
        }
        break;
      }
      switch (base_at(ahead_r, ahead_c)) {
        case Base::Wall:
          break;
        case Base::Floor:
          agent_row_ = ahead_r;
          agent_col_ = ahead_c;
          break;
        case Base::Goal:
          agent_row_ = ahead_r;
          agent_col_ = ahead_c;
          reward = 1.0;
          terminated = true;
          break;
        case Base::Lava:
          agent_row_ = ahead_r;
          agent_col_ = ahead_c;
          if (lava_config_ == LavaConfig::Terminal) {
            reward = -1.0;
            terminated = true;
          }
          break;
      }
      break;
    }
    case Action::Pickup: {
      KeyInfo* k = key_at(ahead_r, ahead_c);
      if (k && inventory_ == 0) {
        inventory_ = k->color == KeyColor::Yellow ? sym_inv_yellow_ : sym_inv_blue_;
        k->where = KeyWhere::Held;
      }
      break;
    }
    case Action::Drop: {
      if (inventory_ == 0) break;
      if (base_at(ahead_r, ahead_c) != Base::Floor || key_at(ahead_r, ahead_c) ||
          is_door(ahead_r, ahead_c))
        break;
      for (KeyInfo& k : keys_) {
        if (k.where == KeyWhere::Held) {
          k.where = KeyWhere::OnGrid;
          k.row = ahead_r;
          k.col = ahead_c;
          break;
        }
      }
      inventory_ = 0;
      break;
    }
    case Action::Toggle: {
      if (!is_door(ahead_r, ahead_c)) break;
      if (door_->state == 0) {
        const bool match =
            (door_->required == KeyColor::Yellow && inventory_ == sym_inv_yellow_) ||
            (door_->required == KeyColor::Blue && inventory_ == sym_inv_blue_);
        if (match) {
          door_->state = 1;
          inventory_ = 0;
          for (KeyInfo& k : keys_) {
            if (k.where == KeyWhere::Held) {
              k.where = KeyWhere::Gone;
              break;
            }
          }
        }
      } else {
        door_->state = door_->state == 1 ? 2 : 1;
      }
      break;
    }
  }

  step_count_ += 1;
  global_steps_ += 1;

  bool truncated = false;
  if (terminated) {
    end_episode();
  } else if (step_count_ >= max_steps_) {
    truncated = true;
    end_episode();
  }
  return StepResult{observe_symbolic(), reward, terminated, truncated};
}

bool GridEnv::injection_due() const {
  if (novelty_.kind == NoveltyKind::None || injected_ || in_episode_) return false;
  return novelty_.by_episodes ? episodes_completed_ >= novelty_.inject_at
                              : global_steps_ >= novelty_.inject_at;
}

void GridEnv::inject_novelty() {
  if (!injection_due())
    throw ContractError("novelty injection outside its episode-boundary window");
  switch (novelty_.kind) {
    case NoveltyKind::None:
      throw ContractError("no novelty configured");
    case NoveltyKind::DoorKeyChange:
      door_->required = door_->required == KeyColor::Yellow ? KeyColor::Blue : KeyColor::Yellow;
      break;
    case NoveltyKind::LavaProof:
      lava_config_ = LavaConfig::Harmless;
      break;
    case NoveltyKind::LavaHurts:
      lava_config_ = LavaConfig::Terminal;
      break;
  }
  injected_ = true;
}

// --- restore ---------------------------------------------------------------

void GridEnv::restore(const SymbolicState& s) {
  if (!compatible(*schema_, s.schema())) throw SchemaError("state schema mismatch");

  const auto loc = s.interval_value(f_agent_loc_);
  const int r = loc[0], c = loc[1];
  const int facing = s.symbol(f_facing_);

  int inventory = 0;
  if (f_inventory_) inventory = s.symbol(*f_inventory_);
  int door_state = door_ ? s.symbol(*f_door_state_) : 0;

  std::vector<KeyInfo> keys = keys_;
  for (KeyInfo& k : keys) {
    const std::int32_t sym = s.symbol(*f_key_loc_[static_cast<int>(k.color)]);
    if (sym == 0) {
      k.where = KeyWhere::Held;
      const std::int32_t inv_sym =
          k.color == KeyColor::Yellow ? sym_inv_yellow_ : sym_inv_blue_;
      if (inventory != inv_sym)
        throw ContractError("held key does not match inventory");
    } else if (sym == 1) {
      k.where = KeyWhere::Gone;
    } else {
      k.where = KeyWhere::OnGrid;
      k.row = symbol_cell_[static_cast<std::size_t>(sym)].first;
      k.col = symbol_cell_[static_cast<std::size_t>(sym)].second;
    }
  }
  bool any_held = false;
  for (const KeyInfo& k : keys) any_held = any_held || k.where == KeyWhere::Held;
  if (inventory != 0 && !any_held) throw ContractError("inventory without a held key");

  if (f_door_loc_) {
    const auto dl = s.interval_value(*f_door_loc_);
    if (dl[0] != door_->row || dl[1] != door_->col)
      throw ContractError("door location does not match the layout");
  }
  const auto gl = s.interval_value(f_goal_loc_);
  if (gl[0] != goal_row_ || gl[1] != goal_col_)
    throw ContractError("goal location does not match the layout");

  const Base base = base_at(r, c);
  if (base == Base::Wall) throw ContractError("agent on a wall");
  if (base == Base::Goal) throw ContractError("cannot restore a terminal state (goal)");
  if (base == Base::Lava && lava_config_ == LavaConfig::Terminal)
    throw ContractError("cannot restore a terminal state (lava)");
  if (is_door(r, c) && door_state != 2) throw ContractError("agent inside a non-open door");
  for (const KeyInfo& k : keys)
    if (k.where == KeyWhere::OnGrid && k.row == r && k.col == c)
      throw ContractError("agent on a key cell");

  agent_row_ = r;
  agent_col_ = c;
  agent_facing_ = facing;
  inventory_ = inventory;
  if (door_) door_->state = door_state;
  keys_ = std::move(keys);
  in_episode_ = true;

  if (s.symbol(f_cell_ahead_) != cell_ahead_symbol())
    throw ContractError("cell-ahead feature inconsistent with the layout");
}

// --- rendering and dumps ---------------------------------------------------

std::string GridEnv::render() const {
  std::string out;
  out.reserve(static_cast<std::size_t>((width_ + 1) * height_));
  static const char kAgentChar[4] = {'^', '>', 'v', '<'};
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      char ch = '.';
      if (in_episode_ && r == agent_row_ && c == agent_col_) {
        ch = kAgentChar[agent_facing_];
      } else if (const KeyInfo* k = key_at(r, c)) {
        ch = k->color == KeyColor::Yellow ? 'y' : 'b';
      } else if (is_door(r, c)) {
        ch = door_->state == 0 ? 'D' : (door_->state == 1 ? 'd' : 'o');
      } else {
        switch (base_at(r, c)) {
          case Base::Wall: ch = '#'; break;
          case Base::Floor: ch = '.'; break;
          case Base::Lava: ch = 'L'; break;
          case Base::Goal: ch = 'G'; break;
        }
      }
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  return out;
}

nlohmann::json GridEnv::layout_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["name"] = name_;
  j["width"] = width_;
  j["height"] = height_;
  j["max_steps"] = max_steps_;
  std::vector<std::string> rows;
  for (int r = 0; r < height_; ++r) {
    std::string row;
    for (int c = 0; c < width_; ++c) {
      char ch = '.';
      switch (base_at(r, c)) {
        case Base::Wall: ch = '#'; break;
        case Base::Floor: ch = '.'; break;
        case Base::Lava: ch = 'L'; break;
        case Base::Goal: ch = 'G'; break;
      }
      if (is_door(r, c)) ch = 'D';
      for (const KeyInfo& k : keys_)
        if (k.spawn_row == r && k.spawn_col == c)
          ch = k.color == KeyColor::Yellow ? 'y' : 'b';
      row.push_back(ch);
    }
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  if (door_) {
    j["door"] = nlohmann::json{
        {"row", door_->row},
        {"col", door_->col},
        {"required_key", door_->required == KeyColor::Yellow ? "yellow" : "blue"},
        {"state", door_->state == 0 ? "locked" : (door_->state == 1 ? "closed" : "open")}};
  }
  nlohmann::json keys = nlohmann::json::array();
  for (const KeyInfo& k : keys_) {
    keys.push_back(nlohmann::json{{"color", k.color == KeyColor::Yellow ? "yellow" : "blue"},
                                  {"spawn", {k.spawn_row, k.spawn_col}}});
  }
  j["keys"] = std::move(keys);
  j["goal"] = {goal_row_, goal_col_};
  nlohmann::json starts = nlohmann::json::array();
  for (const StartPose& p : starts_) starts.push_back({p.row, p.col, p.facing});
  j["starts"] = std::move(starts);
  j["lava_config"] = lava_config_ == LavaConfig::Terminal ? "terminal" : "harmless";
  j["novelty"] = nlohmann::json{{"kind", novelty_name_string(novelty_.kind)},
                                {"inject_at", novelty_.inject_at},
                                {"by_episodes", novelty_.by_episodes},
                                {"injected", injected_}};
  j["schema"] = schema_->to_json();
  return j;
}

}  // namespace worldcloner
