#include "worldcloner/feature.hpp"

#include <algorithm>
#include <unordered_set>

namespace worldcloner {

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_mix(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (i * 8)) & 0xff;
    h *= kFnvPrime;
  }
}

void fnv_mix_str(std::uint64_t& h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  fnv_mix(h, s.size());
}

}  // namespace

// --- FeatureSpec -----------------------------------------------------------

FeatureSpec FeatureSpec::interval(std::string name, std::vector<std::int32_t> lo,
                                  std::vector<std::int32_t> hi) {
  FeatureSpec f;
  f.name = std::move(name);
  f.kind = FeatureKind::IntegerInterval;
  f.lo = std::move(lo);
  f.hi = std::move(hi);
  return f;
}

FeatureSpec FeatureSpec::categorical(std::string name, std::vector<std::string> symbols) {
  FeatureSpec f;
  f.name = std::move(name);
  f.kind = FeatureKind::Categorical;
  f.symbols = std::move(symbols);
  return f;
}

// --- FeatureSchema ---------------------------------------------------------

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features)
    : features_(std::move(features)) {
  if (features_.empty()) throw SchemaError("schema needs at least one feature");

  std::unordered_set<std::string_view> names;
  data_offset_.resize(features_.size());
  axis_offset_.resize(features_.size());

  for (std::size_t f = 0; f < features_.size(); ++f) {
    const FeatureSpec& spec = features_[f];
    if (spec.name.empty()) throw SchemaError("feature name must be non-empty");
    if (!names.insert(spec.name).second)
      throw SchemaError("duplicate feature name: " + spec.name);

    data_offset_[f] = flat_size_;
    if (spec.kind == FeatureKind::IntegerInterval) {
      if (spec.lo.empty() || spec.lo.size() != spec.hi.size())
        throw SchemaError("interval feature " + spec.name + " has malformed bounds");
      for (std::size_t a = 0; a < spec.lo.size(); ++a)
        if (spec.lo[a] > spec.hi[a])
          throw SchemaError("interval feature " + spec.name + " has lo > hi");
      axis_offset_[f] = int_axis_count_;
      int_axis_count_ += spec.lo.size();
      flat_size_ += spec.lo.size();
    } else {
      if (spec.symbols.empty())
        throw SchemaError("categorical feature " + spec.name + " has no symbols");
      if (spec.symbols.size() > 64)
        throw SchemaError("categorical feature " + spec.name + " exceeds 64 symbols");
      std::unordered_set<std::string_view> syms;
      for (const auto& s : spec.symbols)
        if (s.empty() || !syms.insert(s).second)
          throw SchemaError("categorical feature " + spec.name + " has empty or duplicate symbols");
      axis_offset_[f] = categorical_count_;
      categorical_count_ += 1;
      flat_size_ += 1;
    }
  }

  std::uint64_t h = kFnvOffset;
  for (const FeatureSpec& spec : features_) {
    fnv_mix_str(h, spec.name);
    fnv_mix(h, spec.kind == FeatureKind::IntegerInterval ? 1 : 2);
    for (std::size_t a = 0; a < spec.lo.size(); ++a) {
      fnv_mix(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(spec.lo[a])));
      fnv_mix(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(spec.hi[a])));
    }
    for (const auto& s : spec.symbols) fnv_mix_str(h, s);
  }
  fingerprint_ = h;
}

std::optional<std::size_t> FeatureSchema::feature_index(std::string_view name) const {
  for (std::size_t f = 0; f < features_.size(); ++f)
    if (features_[f].name == name) return f;
  return std::nullopt;
}

std::int32_t FeatureSchema::symbol_id(std::size_t f, std::string_view symbol) const {
  const FeatureSpec& spec = features_.at(f);
  if (spec.kind != FeatureKind::Categorical)
    throw SchemaError("feature " + spec.name + " is not categorical");
  for (std::size_t i = 0; i < spec.symbols.size(); ++i)
    if (spec.symbols[i] == symbol) return static_cast<std::int32_t>(i);
  throw DomainError("symbol '" + std::string(symbol) + "' not in domain of " + spec.name);
}

const std::string& FeatureSchema::symbol_name(std::size_t f, std::int32_t id) const {
  const FeatureSpec& spec = features_.at(f);
  if (spec.kind != FeatureKind::Categorical)
    throw SchemaError("feature " + spec.name + " is not categorical");
  if (id < 0 || static_cast<std::size_t>(id) >= spec.symbols.size())
    throw DomainError("symbol id out of domain for " + spec.name);
  return spec.symbols[static_cast<std::size_t>(id)];
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json features = nlohmann::json::array();
  for (const FeatureSpec& spec : features_) {
    nlohmann::json f;
    f["name"] = spec.name;
    if (spec.kind == FeatureKind::IntegerInterval) {
      f["kind"] = "interval";
      f["lo"] = spec.lo;
      f["hi"] = spec.hi;
    } else {
      f["kind"] = "categorical";
      f["symbols"] = spec.symbols;
    }
    features.push_back(std::move(f));
  }
  return nlohmann::json{{"features", std::move(features)}};
}

std::shared_ptr<const FeatureSchema> FeatureSchema::from_json(const nlohmann::json& j) {
  if (!j.contains("features") || !j["features"].is_array())
    throw SchemaError("schema json needs a 'features' array");
  std::vector<FeatureSpec> specs;
  for (const auto& f : j["features"]) {
    const std::string kind = f.at("kind").get<std::string>();
    if (kind == "interval") {
      specs.push_back(FeatureSpec::interval(f.at("name").get<std::string>(),
                                            f.at("lo").get<std::vector<std::int32_t>>(),
                                            f.at("hi").get<std::vector<std::int32_t>>()));
    } else if (kind == "categorical") {
      specs.push_back(FeatureSpec::categorical(f.at("name").get<std::string>(),
                                               f.at("symbols").get<std::vector<std::string>>()));
    } else {
      throw SchemaError("unknown feature kind: " + kind);
    }
  }
  return std::make_shared<const FeatureSchema>(std::move(specs));
}

// --- SymbolicState ---------------------------------------------------------

SymbolicState::SymbolicState(SchemaPtr schema, std::vector<std::int32_t> data)
    : schema_(std::move(schema)), data_(std::move(data)) {
  if (!schema_) throw SchemaError("state needs a schema");
  if (data_.size() != schema_->flat_size())
    throw SchemaError("state data size does not match schema");
  for (std::size_t f = 0; f < schema_->feature_count(); ++f) {
    const FeatureSpec& spec = schema_->feature(f);
    const std::size_t off = schema_->data_offset(f);
    if (spec.kind == FeatureKind::IntegerInterval) {
      for (std::size_t a = 0; a < spec.lo.size(); ++a) {
        const std::int32_t v = data_[off + a];
        if (v < spec.lo[a] || v > spec.hi[a])
          throw DomainError("value for " + spec.name + " outside its interval domain");
      }
    } else {
      const std::int32_t v = data_[off];
      if (v < 0 || static_cast<std::size_t>(v) >= spec.symbols.size())
        throw DomainError("symbol id for " + spec.name + " outside its domain");
    }
  }
}

std::span<const std::int32_t> SymbolicState::interval_value(std::size_t f) const {
  const FeatureSpec& spec = schema_->feature(f);
  if (spec.kind != FeatureKind::IntegerInterval)
    throw SchemaError("feature " + spec.name + " is not an interval feature");
  return std::span<const std::int32_t>(data_.data() + schema_->data_offset(f), spec.lo.size());
}

std::int32_t SymbolicState::symbol(std::size_t f) const {
  const FeatureSpec& spec = schema_->feature(f);
  if (spec.kind != FeatureKind::Categorical)
    throw SchemaError("feature " + spec.name + " is not categorical");
  return data_[schema_->data_offset(f)];
}

StateKey SymbolicState::key() const {
  std::string bytes;
  bytes.resize(data_.size() * 4);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const auto u = static_cast<std::uint32_t>(data_[i]);
    bytes[i * 4 + 0] = static_cast<char>(u & 0xff);
    bytes[i * 4 + 1] = static_cast<char>((u >> 8) & 0xff);
    bytes[i * 4 + 2] = static_cast<char>((u >> 16) & 0xff);
    bytes[i * 4 + 3] = static_cast<char>((u >> 24) & 0xff);
  }
  return StateKey{std::move(bytes)};
}

SymbolicState make_state(SchemaPtr schema,
                         const std::vector<std::pair<std::string, FeatureValue>>& values) {
  if (!schema) throw SchemaError("make_state needs a schema");
  std::vector<std::int32_t> data(schema->flat_size(), 0);
  std::vector<bool> seen(schema->feature_count(), false);

  for (const auto& [name, value] : values) {
    const auto fi = schema->feature_index(name);
    if (!fi) throw SchemaError("unknown feature: " + name);
    const std::size_t f = *fi;
    if (seen[f]) throw SchemaError("feature given twice: " + name);
    seen[f] = true;
    const FeatureSpec& spec = schema->feature(f);
    const std::size_t off = schema->data_offset(f);
    if (spec.kind == FeatureKind::IntegerInterval) {
      const auto* tuple = std::get_if<std::vector<std::int32_t>>(&value);
      if (!tuple || tuple->size() != spec.lo.size())
        throw SchemaError("feature " + name + " needs a tuple of " +
                          std::to_string(spec.lo.size()) + " axes");
      std::copy(tuple->begin(), tuple->end(), data.begin() + static_cast<std::ptrdiff_t>(off));
    } else {
      const auto* symbol = std::get_if<std::string>(&value);
      if (!symbol) throw SchemaError("feature " + name + " needs a symbol name");
      data[off] = schema->symbol_id(f, *symbol);
    }
  }
  for (std::size_t f = 0; f < schema->feature_count(); ++f)
    if (!seen[f]) throw SchemaError("missing value for feature " + schema->feature(f).name);

  return SymbolicState(std::move(schema), std::move(data));
}

// --- StateDelta ------------------------------------------------------------

StateDelta::StateDelta(std::vector<DeltaEntry> entries) : entries_(std::move(entries)) {
  std::uint64_t h = kFnvOffset;
  for (const DeltaEntry& e : entries_) {
    fnv_mix(h, e.index());
    if (const auto* add = std::get_if<AdditiveEntry>(&e)) {
      for (std::int32_t v : add->offsets)
        fnv_mix(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(v)));
    } else if (const auto* as = std::get_if<AssignEntry>(&e)) {
      fnv_mix(h, as->from_set);
      fnv_mix(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(as->to_symbol)));
    }
  }
  hash_ = h;
}

bool StateDelta::is_identity() const {
  for (const DeltaEntry& e : entries_)
    if (!std::holds_alternative<std::monostate>(e)) return false;
  return true;
}

nlohmann::json StateDelta::to_json(const FeatureSchema& schema) const {
  if (entries_.size() != schema.feature_count())
    throw SchemaError("delta does not match schema");
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t f = 0; f < entries_.size(); ++f) {
    const DeltaEntry& e = entries_[f];
    if (std::holds_alternative<std::monostate>(e)) {
      out.push_back(nullptr);
    } else if (const auto* add = std::get_if<AdditiveEntry>(&e)) {
      out.push_back(nlohmann::json{{"offsets", add->offsets}});
    } else {
      const auto& as = std::get<AssignEntry>(e);
      nlohmann::json from = nlohmann::json::array();
      const FeatureSpec& spec = schema.feature(f);
      for (std::size_t i = 0; i < spec.symbols.size(); ++i)
        if (as.from_set & (std::uint64_t{1} << i)) from.push_back(spec.symbols[i]);
      out.push_back(nlohmann::json{{"from", std::move(from)},
                                   {"to", schema.symbol_name(f, as.to_symbol)}});
    }
  }
  return out;
}

StateDelta StateDelta::from_json(const nlohmann::json& j, const FeatureSchema& schema) {
  if (!j.is_array() || j.size() != schema.feature_count())
    throw SchemaError("delta json does not match schema");
  std::vector<DeltaEntry> entries;
  entries.reserve(j.size());
  for (std::size_t f = 0; f < j.size(); ++f) {
    const auto& e = j[f];
    if (e.is_null()) {
      entries.emplace_back(std::monostate{});
    } else if (e.contains("offsets")) {
      entries.emplace_back(AdditiveEntry{e.at("offsets").get<std::vector<std::int32_t>>()});
    } else {
      AssignEntry as;
      for (const auto& s : e.at("from"))
        as.from_set |= std::uint64_t{1} << schema.symbol_id(f, s.get<std::string>());
      as.to_symbol = schema.symbol_id(f, e.at("to").get<std::string>());
      entries.emplace_back(as);
    }
  }
  return StateDelta(std::move(entries));
}

// --- diff / apply ----------------------------------------------------------

StateDelta diff(const SymbolicState& prev, const SymbolicState& next) {
  if (!compatible(prev.schema(), next.schema()))
    throw SchemaError("diff across different schemas");
  const FeatureSchema& schema = prev.schema();
  std::vector<DeltaEntry> entries;
  entries.reserve(schema.feature_count());

  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    const FeatureSpec& spec = schema.feature(f);
    const std::size_t off = schema.data_offset(f);
    if (spec.kind == FeatureKind::IntegerInterval) {
      bool same = true;
      std::vector<std::int32_t> offsets(spec.lo.size());
      for (std::size_t a = 0; a < spec.lo.size(); ++a) {
        offsets[a] = next.data()[off + a] - prev.data()[off + a];
        if (offsets[a] != 0) same = false;
      }
      if (same)
        entries.emplace_back(std::monostate{});
      else
        entries.emplace_back(AdditiveEntry{std::move(offsets)});
    } else {
      const std::int32_t a = prev.data()[off];
      const std::int32_t b = next.data()[off];
      if (a == b)
        entries.emplace_back(std::monostate{});
      else
        entries.emplace_back(AssignEntry{std::uint64_t{1} << a, b});
    }
  }
  return StateDelta(std::move(entries));
}

SymbolicState apply_delta(const SymbolicState& s, const StateDelta& d) {
  const FeatureSchema& schema = s.schema();
  if (d.entries().size() != schema.feature_count())
    throw SchemaError("delta does not match state's schema");

  std::vector<std::int32_t> data(s.data().begin(), s.data().end());
  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    const FeatureSpec& spec = schema.feature(f);
    const std::size_t off = schema.data_offset(f);
    const DeltaEntry& e = d.entries()[f];
    if (std::holds_alternative<std::monostate>(e)) continue;
    if (const auto* add = std::get_if<AdditiveEntry>(&e)) {
      if (spec.kind != FeatureKind::IntegerInterval || add->offsets.size() != spec.lo.size())
        throw SchemaError("additive entry does not fit feature " + spec.name);
      for (std::size_t a = 0; a < add->offsets.size(); ++a) data[off + a] += add->offsets[a];
    } else {
      if (spec.kind != FeatureKind::Categorical)
        throw SchemaError("assign entry does not fit feature " + spec.name);
      data[off] = std::get<AssignEntry>(e).to_symbol;
    }
  }
  // The state constructor re-validates domains and raises DomainError when an
  // additive entry pushed a value out of range.
  return SymbolicState(s.schema_ptr(), std::move(data));
}

}  // namespace worldcloner
