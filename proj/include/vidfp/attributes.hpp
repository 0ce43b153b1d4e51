#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "vidfp/handshake.hpp"

namespace vidfp {

enum class AttrType { Numerical, Categorical, List, Presence, Length };
enum class CostTier { Low, Medium, High };

std::string_view to_string(AttrType t);
std::string_view to_string(CostTier c);
CostTier parse_cost_tier(std::string_view s);

struct AttributeSpec {
    std::string label;     // t1, m3, o12, q17, ...
    std::string field;     // handshake field name
    bool tcp = false;
    bool quic = false;
    std::string category;  // transport, mandatory, optional, quic
    AttrType type = AttrType::Numerical;
    CostTier cost = CostTier::Low;
    std::size_t slots = 1;  // L for list attributes, 1 otherwise

    bool applies_to(Protocol p) const { return p == Protocol::TCP ? tcp : quic; }
};

class AttributeRegistry {
public:
    static const AttributeRegistry& defaults();
    static AttributeRegistry from_json(std::string_view json_text);
    static AttributeRegistry load(const std::string& path);

    const std::vector<AttributeSpec>& all() const noexcept { return specs_; }
    std::vector<const AttributeSpec*> for_protocol(Protocol p) const;
    const AttributeSpec* find(std::string_view label) const;

private:
    std::vector<AttributeSpec> specs_;
};

/// Reserved dictionary codes.
constexpr std::uint32_t kAbsentCode = 0;
constexpr std::uint32_t kGreaseCode = 65534;
constexpr std::uint32_t kUnseenCode = 65535;

/// List items carrying this marker encode to kGreaseCode without touching
/// the dictionary.
inline constexpr std::string_view kGreaseItem = "GREASE";

/// Where each attribute lives in the flat vector of one protocol.
struct SlotRange {
    std::string label;
    std::size_t begin = 0;
    std::size_t count = 0;
};

class Layout {
public:
    Layout() = default;
    Layout(const AttributeRegistry& registry, Protocol protocol);

    Protocol protocol() const noexcept { return protocol_; }
    std::size_t width() const noexcept { return width_; }
    const std::vector<SlotRange>& ranges() const noexcept { return ranges_; }
    const std::vector<const AttributeSpec*>& specs() const noexcept { return specs_; }
    const SlotRange* find(std::string_view label) const;
    /// Label owning slot `i`.
    const std::string& label_of(std::size_t slot) const;
    std::vector<std::size_t> slots_of(const std::set<std::string>& labels) const;
    /// Stable hash of (protocol, labels, types, slot counts).
    const std::string& fingerprint() const noexcept { return fingerprint_; }

private:
    Protocol protocol_ = Protocol::TCP;
    std::vector<const AttributeSpec*> specs_;
    std::vector<SlotRange> ranges_;
    std::vector<std::size_t> owner_;
    std::size_t width_ = 0;
    std::string fingerprint_;
};

/// A handshake field reduced to what its attribute type needs.
struct FieldValue {
    bool present = false;
    double number = 0;                // numerical, length
    std::string category;             // categorical
    std::vector<std::string> items;   // list, wire order
};

/// Throws attributes.UnknownField for registry fields the extractor lacks.
FieldValue field_value(const HandshakeFieldSet& fields, const AttributeSpec& spec);

/// Field values keyed by attribute label.
using FieldValues = std::map<std::string, FieldValue>;
FieldValues field_values(const HandshakeFieldSet& fields, const Layout& layout);

/// null when absent, otherwise the JSON form matching the attribute type.
nlohmann::json to_json(const FieldValue& v, AttrType type);
FieldValue field_value_from_json(const nlohmann::json& j, AttrType type);

enum class EncodeMode { Train, Infer };

/// Per-field value to code maps. Codes are dense from 1 in first-seen order.
class DictionaryStore {
public:
    static constexpr std::string_view kSchema = "vidfp.dicts/1";

    std::optional<std::uint32_t> lookup(const std::string& field, const std::string& value) const;
    /// Train mode assigns a fresh code (FrozenDictionary if frozen); infer
    /// mode returns kUnseenCode for values never seen.
    std::uint32_t code_for(const std::string& field, const std::string& value, EncodeMode mode);
    std::size_t size(const std::string& field) const;
    std::size_t total_entries() const;
    /// Values of `field` in code order.
    std::vector<std::string> values(const std::string& field) const;

    bool frozen() const noexcept { return frozen_; }
    void freeze() noexcept { frozen_ = true; }
    /// Hash of the full contents; models record it to refuse stale encoders.
    std::string version() const;

    nlohmann::json to_json() const;
    /// Throws attributes.SchemaVersionMismatch. The result is frozen.
    static DictionaryStore from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static DictionaryStore load(const std::string& path);

    bool operator==(const DictionaryStore& o) const { return codes_ == o.codes_; }

private:
    std::map<std::string, std::map<std::string, std::uint32_t>> codes_;
    bool frozen_ = false;
};

struct AttributeVector {
    Protocol protocol = Protocol::TCP;
    std::vector<double> values;
    std::string layout_fingerprint;
    std::size_t overflow_items = 0;  // list items dropped past L

    bool operator==(const AttributeVector&) const = default;
};

class Encoder {
public:
    Encoder(const AttributeRegistry& registry, Protocol protocol) : layout_(registry, protocol) {}

    const Layout& layout() const noexcept { return layout_; }
    /// Throws attributes.ProtocolMismatch when `fields` is the other protocol.
    AttributeVector encode(const HandshakeFieldSet& fields, DictionaryStore& dicts, EncodeMode mode) const;
    /// Same encoding from pre-extracted values; labels missing from `values` count as absent.
    AttributeVector encode(const FieldValues& values, DictionaryStore& dicts, EncodeMode mode) const;

private:
    AttributeVector blank() const;

    Layout layout_;
};

AttributeVector encode(const HandshakeFieldSet& fields, const AttributeRegistry& registry, DictionaryStore& dicts,
                       EncodeMode mode);

/// Drops attributes scoring below `cutoff` whose cost tier is in `excluded`.
std::set<std::string> cost_subset(const Layout& layout, const std::set<CostTier>& excluded,
                                  const std::map<std::string, double>& importance, double cutoff = 0.1);

}  // namespace vidfp
