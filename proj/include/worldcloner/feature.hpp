#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "worldcloner/errors.hpp"

namespace worldcloner {

// ---------------------------------------------------------------------------
// Feature schema
// ---------------------------------------------------------------------------

enum class FeatureKind { IntegerInterval, Categorical };

// One named feature. Integer-interval features are tuples of one or more
// integer axes with inclusive per-axis domain bounds; categorical features
// take one symbol out of a finite set (at most 64 symbols, so rule
// preconditions can hold symbol sets as bitmasks).
struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::IntegerInterval;
  std::vector<std::int32_t> lo, hi;        // IntegerInterval: per-axis bounds
  std::vector<std::string> symbols;        // Categorical: symbol names

  static FeatureSpec interval(std::string name, std::vector<std::int32_t> lo,
                              std::vector<std::int32_t> hi);
  static FeatureSpec categorical(std::string name, std::vector<std::string> symbols);

  std::size_t width() const {
    return kind == FeatureKind::IntegerInterval ? lo.size() : 1;
  }
};

// Ordered, immutable feature list. The order is fixed for the lifetime of an
// experiment; states, deltas and rule preconditions all align to it. States
// are stored flat: interval features contribute one slot per axis and
// categorical features one slot holding the symbol id.
class FeatureSchema {
 public:
  explicit FeatureSchema(std::vector<FeatureSpec> features);

  std::size_t feature_count() const { return features_.size(); }
  const FeatureSpec& feature(std::size_t f) const { return features_[f]; }
  std::optional<std::size_t> feature_index(std::string_view name) const;

  std::size_t flat_size() const { return flat_size_; }
  std::size_t int_axis_count() const { return int_axis_count_; }
  std::size_t categorical_count() const { return categorical_count_; }

  // Offset of feature f in the flat state vector.
  std::size_t data_offset(std::size_t f) const { return data_offset_[f]; }
  // Offset of an interval feature's first axis among all interval axes.
  std::size_t axis_offset(std::size_t f) const { return axis_offset_[f]; }
  // Index of a categorical feature among all categorical features.
  std::size_t cat_index(std::size_t f) const { return axis_offset_[f]; }

  std::int32_t symbol_id(std::size_t f, std::string_view symbol) const;
  const std::string& symbol_name(std::size_t f, std::int32_t id) const;

  // Content hash; lets independently constructed but identical schemas
  // interoperate (e.g. a deserialized rule model against a live env).
  std::uint64_t fingerprint() const { return fingerprint_; }

  nlohmann::json to_json() const;
  static std::shared_ptr<const FeatureSchema> from_json(const nlohmann::json& j);

 private:
  std::vector<FeatureSpec> features_;
  std::vector<std::size_t> data_offset_;
  std::vector<std::size_t> axis_offset_;
  std::size_t flat_size_ = 0;
  std::size_t int_axis_count_ = 0;
  std::size_t categorical_count_ = 0;
  std::uint64_t fingerprint_ = 0;
};

inline bool compatible(const FeatureSchema& a, const FeatureSchema& b) {
  return &a == &b || a.fingerprint() == b.fingerprint();
}

using SchemaPtr = std::shared_ptr<const FeatureSchema>;

// ---------------------------------------------------------------------------
// Symbolic state
// ---------------------------------------------------------------------------

// Opaque, deterministic state identity: equal states produce equal keys, and
// keys are injective for states of one schema (the packed value bytes).
struct StateKey {
  std::string bytes;
  bool operator==(const StateKey&) const = default;
  bool operator<(const StateKey& o) const { return bytes < o.bytes; }
};

// Complete observable state: one value per schema feature.
class SymbolicState {
 public:
  SymbolicState(SchemaPtr schema, std::vector<std::int32_t> data);

  const FeatureSchema& schema() const { return *schema_; }
  const SchemaPtr& schema_ptr() const { return schema_; }
  std::span<const std::int32_t> data() const { return data_; }

  // Interval feature value (all axes of feature f).
  std::span<const std::int32_t> interval_value(std::size_t f) const;
  // Categorical feature symbol id.
  std::int32_t symbol(std::size_t f) const;

  StateKey key() const;

  bool operator==(const SymbolicState& o) const {
    return compatible(*schema_, *o.schema_) && data_ == o.data_;
  }
  bool operator!=(const SymbolicState& o) const { return !(*this == o); }

 private:
  SchemaPtr schema_;
  std::vector<std::int32_t> data_;
};

// Readable state construction for tests and environments: every feature gets
// either an axis tuple or a symbol name.
using FeatureValue = std::variant<std::vector<std::int32_t>, std::string>;
SymbolicState make_state(SchemaPtr schema,
                         const std::vector<std::pair<std::string, FeatureValue>>& values);

// ---------------------------------------------------------------------------
// State deltas
// ---------------------------------------------------------------------------

// Per-feature change. Unchanged is std::monostate. Additive shifts an
// interval feature componentwise; Assign replaces a categorical symbol and
// records which symbols it was seen to replace.
struct AdditiveEntry {
  std::vector<std::int32_t> offsets;
  bool operator==(const AdditiveEntry&) const = default;
};
struct AssignEntry {
  std::uint64_t from_set = 0;  // bitmask over the feature's symbols
  std::int32_t to_symbol = 0;
  bool operator==(const AssignEntry&) const = default;
};
using DeltaEntry = std::variant<std::monostate, AdditiveEntry, AssignEntry>;

class StateDelta {
 public:
  StateDelta() = default;
  explicit StateDelta(std::vector<DeltaEntry> entries);

  const std::vector<DeltaEntry>& entries() const { return entries_; }
  bool is_identity() const;
  std::uint64_t hash() const { return hash_; }

  bool operator==(const StateDelta& o) const {
    return hash_ == o.hash_ && entries_ == o.entries_;
  }
  bool operator!=(const StateDelta& o) const { return !(*this == o); }

  nlohmann::json to_json(const FeatureSchema& schema) const;
  static StateDelta from_json(const nlohmann::json& j, const FeatureSchema& schema);

 private:
  std::vector<DeltaEntry> entries_;
  std::uint64_t hash_ = 0;
};

// Componentwise difference next - prev. Identical features map to Unchanged;
// interval features to Additive(next - prev); categorical features to
// Assign({prev} -> next).
StateDelta diff(const SymbolicState& prev, const SymbolicState& next);

// Applies a delta. Additive results outside the feature domain raise
// DomainError; a delta whose shape does not match the schema raises
// SchemaError. Assign entries do not require the current symbol to be in the
// recorded from-set; they overwrite unconditionally.
SymbolicState apply_delta(const SymbolicState& s, const StateDelta& d);

}  // namespace worldcloner

template <>
struct std::hash<worldcloner::StateKey> {
  std::size_t operator()(const worldcloner::StateKey& k) const noexcept {
    return std::hash<std::string>{}(k.bytes);
  }
};
