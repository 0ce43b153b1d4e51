#include "vidfp/attributes.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "vidfp/embedded.hpp"
#include "vidfp/error.hpp"

namespace vidfp {

std::string_view to_string(AttrType t) {
    switch (t) {
        case AttrType::Numerical: return "numerical";
        case AttrType::Categorical: return "categorical";
        case AttrType::List: return "list";
        case AttrType::Presence: return "presence";
        case AttrType::Length: return "length";
    }
    return "numerical";
}

std::string_view to_string(CostTier c) {
    switch (c) {
        case CostTier::Low: return "low";
        case CostTier::Medium: return "medium";
        case CostTier::High: return "high";
    }
    return "low";
}

CostTier parse_cost_tier(std::string_view s) {
    if (s == "low") return CostTier::Low;
    if (s == "medium") return CostTier::Medium;
    if (s == "high") return CostTier::High;
    throw Error("attributes", "BadRegistry", "unknown cost tier '" + std::string(s) + "'");
}

namespace {

AttrType parse_attr_type(const std::string& s) {
    if (s == "numerical") return AttrType::Numerical;
    if (s == "categorical") return AttrType::Categorical;
    if (s == "list") return AttrType::List;
    if (s == "presence") return AttrType::Presence;
    if (s == "length") return AttrType::Length;
    throw Error("attributes", "BadRegistry", "unknown attribute type '" + s + "'");
}

std::string hex16(std::uint16_t v) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%04x", v);
    return buf;
}

std::string hex_id(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
    return buf;
}

template <class T>
std::string join_decimal(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

FieldValue number(double v) { return {true, v, {}, {}}; }
FieldValue presence(bool on) { return {on, on ? 1.0 : 0.0, {}, {}}; }
FieldValue category(std::string v) { return {true, 0, std::move(v), {}}; }
template <class T>
FieldValue optional_number(const std::optional<T>& v) {
    return v ? number(static_cast<double>(*v)) : FieldValue{};
}

FieldValue code_list(const std::optional<std::vector<std::uint16_t>>& v) {
    if (!v) return {};
    FieldValue f;
    f.present = true;
    for (auto c : *v) f.items.push_back(c == kGreaseCanonical ? std::string(kGreaseItem) : hex16(c));
    return f;
}

FieldValue code_list(const std::vector<std::uint16_t>& v) { return code_list(std::optional(v)); }

FieldValue string_list(const std::optional<std::vector<std::string>>& v) {
    if (!v) return {};
    FieldValue f;
    f.present = true;
    f.items = *v;
    return f;
}

// Extension-backed lengths count the whole extension including its 4-byte
// type/length header, so an empty-bodied extension still differs from absence.
FieldValue extension_length(const ClientHello& ch, std::uint16_t type) {
    const auto* e = ch.find_extension(type);
    if (!e) return {};
    return number(static_cast<double>(e->body.size() + 4));
}

FieldValue bytes_category(const std::optional<Bytes>& v) {
    if (!v) return {};
    return category(to_hex(*v));
}

using Extractor = std::function<FieldValue(const HandshakeFieldSet&)>;

const std::unordered_map<std::string, Extractor>& extractors() {
    using H = const HandshakeFieldSet&;
    static const std::unordered_map<std::string, Extractor> table = [] {
        std::unordered_map<std::string, Extractor> m;
        auto tcp = [](auto get) {
            return [get](H f) -> FieldValue { return f.tcp ? get(*f.tcp) : FieldValue{}; };
        };
        auto qp = [](auto get) {
            return [get](H f) -> FieldValue { return f.quic_params ? get(*f.quic_params) : FieldValue{}; };
        };
        m["init_packet_size"] = [](H f) { return number(f.init_packet_size); };
        m["ttl"] = [](H f) { return number(f.ttl); };
        m["tcp_cwr"] = tcp([](const TcpHandshakeFields& t) { return presence(t.cwr); });
        m["tcp_ece"] = tcp([](const TcpHandshakeFields& t) { return presence(t.ece); });
        m["tcp_urg"] = tcp([](const TcpHandshakeFields& t) { return presence(t.urg); });
        m["tcp_ack"] = tcp([](const TcpHandshakeFields& t) { return presence(t.ack); });
        m["tcp_psh"] = tcp([](const TcpHandshakeFields& t) { return presence(t.psh); });
        m["tcp_rst"] = tcp([](const TcpHandshakeFields& t) { return presence(t.rst); });
        m["tcp_syn"] = tcp([](const TcpHandshakeFields& t) { return presence(t.syn); });
        m["tcp_fin"] = tcp([](const TcpHandshakeFields& t) { return presence(t.fin); });
        m["tcp_window_size"] = tcp([](const TcpHandshakeFields& t) { return number(t.window_size); });
        m["tcp_mss"] = tcp([](const TcpHandshakeFields& t) { return optional_number(t.mss); });
        m["tcp_window_scale"] = tcp([](const TcpHandshakeFields& t) { return optional_number(t.window_scale); });
        m["tcp_sack_permitted"] = tcp([](const TcpHandshakeFields& t) { return presence(t.sack_permitted); });

        m["handshake_length"] = [](H f) { return number(f.chlo.handshake_length); };
        m["tls_version"] = [](H f) { return category(hex16(f.chlo.legacy_version)); };
        m["cipher_suites"] = [](H f) { return code_list(f.chlo.cipher_suites); };
        m["compression_methods"] = [](H f) { return number(static_cast<double>(f.chlo.compression_methods.size())); };
        m["extensions_length"] = [](H f) { return number(f.chlo.extensions_length); };

        m["tls_extensions"] = [](H f) {
            FieldValue v = code_list(f.chlo.extension_types);
            v.present = f.chlo.has_extensions_block;
            return v;
        };
        m["server_name"] = [](H f) { return extension_length(f.chlo, tls_ext::server_name); };
        m["status_request"] = [](H f) {
            const auto& s = f.chlo.status_request_type;
            return s ? category(std::to_string(*s)) : FieldValue{};
        };
        m["supported_groups"] = [](H f) { return code_list(f.chlo.supported_groups); };
        m["ec_point_formats"] = [](H f) {
            const auto& s = f.chlo.ec_point_formats;
            return s ? category(join_decimal(*s)) : FieldValue{};
        };
        m["signature_algorithms"] = [](H f) { return code_list(f.chlo.signature_algorithms); };
        m["application_layer_protocol_negotiation"] = [](H f) { return string_list(f.chlo.alpn); };
        m["signed_certificate_timestamp"] = [](H f) {
            return extension_length(f.chlo, tls_ext::signed_certificate_timestamp);
        };
        m["padding"] = [](H f) { return extension_length(f.chlo, tls_ext::padding); };
        m["encrypt_then_mac"] = [](H f) { return presence(f.chlo.encrypt_then_mac); };
        m["extended_master_secret"] = [](H f) { return presence(f.chlo.extended_master_secret); };
        m["compress_certificate"] = [](H f) {
            const auto& s = f.chlo.compress_certificate;
            if (!s) return FieldValue{};
            std::string v;
            for (std::size_t i = 0; i < s->size(); ++i) {
                if (i) v += ',';
                v += compress_certificate_name((*s)[i]);
            }
            return category(v);
        };
        m["record_size_limit"] = [](H f) { return optional_number(f.chlo.record_size_limit); };
        m["delegated_credentials"] = [](H f) { return code_list(f.chlo.delegated_credentials); };
        m["session_ticket"] = [](H f) { return extension_length(f.chlo, tls_ext::session_ticket); };
        m["pre_shared_key"] = [](H f) { return presence(f.chlo.pre_shared_key); };
        m["early_data"] = [](H f) { return extension_length(f.chlo, tls_ext::early_data); };
        m["supported_versions"] = [](H f) { return code_list(f.chlo.supported_versions); };
        m["psk_key_exchange_modes"] = [](H f) {
            const auto& s = f.chlo.psk_key_exchange_modes;
            return s ? category(join_decimal(*s)) : FieldValue{};
        };
        m["post_handshake_auth"] = [](H f) { return presence(f.chlo.post_handshake_auth); };
        m["key_share"] = [](H f) { return code_list(f.chlo.key_share_groups); };
        m["application_settings"] = [](H f) { return string_list(f.chlo.application_settings); };
        m["renegotiation_info"] = [](H f) { return presence(f.chlo.renegotiation_info); };

        m["quic_parameters"] = qp([](const QuicTransportParams& p) {
            FieldValue v;
            v.present = true;
            for (auto id : p.ids) v.items.push_back(id == kGreaseTransportParam ? std::string(kGreaseItem) : hex_id(id));
            return v;
        });
        m["max_idle_timeout"] = qp([](const QuicTransportParams& p) { return optional_number(p.max_idle_timeout); });
        m["max_udp_payload_size"] = qp([](const QuicTransportParams& p) { return optional_number(p.max_udp_payload_size); });
        m["initial_max_data"] = qp([](const QuicTransportParams& p) { return optional_number(p.initial_max_data); });
        m["initial_max_stream_data_bidi_local"] =
            qp([](const QuicTransportParams& p) { return optional_number(p.initial_max_stream_data_bidi_local); });
        m["initial_max_stream_data_bidi_remote"] =
            qp([](const QuicTransportParams& p) { return optional_number(p.initial_max_stream_data_bidi_remote); });
        m["initial_max_stream_data_uni"] =
            qp([](const QuicTransportParams& p) { return optional_number(p.initial_max_stream_data_uni); });
        m["initial_max_streams_bidi"] = qp([](const QuicTransportParams& p) { return optional_number(p.initial_max_streams_bidi); });
        m["initial_max_streams_uni"] = qp([](const QuicTransportParams& p) { return optional_number(p.initial_max_streams_uni); });
        m["max_ack_delay"] = qp([](const QuicTransportParams& p) { return optional_number(p.max_ack_delay); });
        m["disable_active_migration"] = qp([](const QuicTransportParams& p) { return presence(p.disable_active_migration); });
        m["active_connection_id_limit"] =
            qp([](const QuicTransportParams& p) { return optional_number(p.active_connection_id_limit); });
        m["initial_source_connection_id"] =
            qp([](const QuicTransportParams& p) { return optional_number(p.initial_source_connection_id_length); });
        m["max_datagram_frame_size"] = qp([](const QuicTransportParams& p) { return optional_number(p.max_datagram_frame_size); });
        m["grease_quic_bit"] = qp([](const QuicTransportParams& p) { return presence(p.grease_quic_bit); });
        m["initial_rtt"] = qp([](const QuicTransportParams& p) { return presence(p.initial_rtt); });
        m["google_connection_options"] = qp([](const QuicTransportParams& p) { return bytes_category(p.google_connection_options); });
        m["user_agent"] = qp([](const QuicTransportParams& p) { return bytes_category(p.user_agent); });
        m["google_version"] = qp([](const QuicTransportParams& p) { return bytes_category(p.google_version); });
        m["version_information"] = qp([](const QuicTransportParams& p) { return bytes_category(p.version_information); });
        return m;
    }();
    return table;
}

std::string read_file(const std::string& path, const char* module) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(module, "IOError", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fnv1a_hex(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

const AttributeRegistry& AttributeRegistry::defaults() {
    static const AttributeRegistry reg = from_json(embedded::attributes_json);
    return reg;
}

AttributeRegistry AttributeRegistry::from_json(std::string_view json_text) {
    AttributeRegistry reg;
    try {
        auto j = nlohmann::json::parse(json_text);
        if (j.value("schema", "") != "vidfp.attributes/1")
            throw Error("attributes", "SchemaVersionMismatch", "attribute registry schema must be vidfp.attributes/1");
        std::set<std::string> seen;
        for (const auto& e : j.at("attributes")) {
            AttributeSpec s;
            s.label = e.at("label").get<std::string>();
            s.field = e.at("field").get<std::string>();
            for (const auto& p : e.at("protocols")) {
                auto proto = parse_protocol(p.get<std::string>());
                (proto == Protocol::TCP ? s.tcp : s.quic) = true;
            }
            s.category = e.value("category", "");
            s.type = parse_attr_type(e.at("type").get<std::string>());
            s.cost = parse_cost_tier(e.at("cost").get<std::string>());
            s.slots = s.type == AttrType::List ? e.at("slots").get<std::size_t>() : 1;
            if (s.slots == 0) throw Error("attributes", "BadRegistry", s.label + ": list needs at least one slot");
            if (!seen.insert(s.label).second) throw Error("attributes", "BadRegistry", "duplicate label " + s.label);
            if (!extractors().count(s.field))
                throw Error("attributes", "UnknownField", "no extractor for field '" + s.field + "'");
            reg.specs_.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error("attributes", "BadRegistry", e.what());
    }
    return reg;
}

AttributeRegistry AttributeRegistry::load(const std::string& path) {
    return from_json(read_file(path, "attributes"));
}

std::vector<const AttributeSpec*> AttributeRegistry::for_protocol(Protocol p) const {
    std::vector<const AttributeSpec*> out;
    for (const auto& s : specs_)
        if (s.applies_to(p)) out.push_back(&s);
    return out;
}

const AttributeSpec* AttributeRegistry::find(std::string_view label) const {
    for (const auto& s : specs_)
        if (s.label == label) return &s;
    return nullptr;
}

Layout::Layout(const AttributeRegistry& registry, Protocol protocol) : protocol_(protocol) {
    specs_ = registry.for_protocol(protocol);
    std::string desc(to_string(protocol));
    for (const auto* s : specs_) {
        ranges_.push_back({s->label, width_, s->slots});
        owner_.insert(owner_.end(), s->slots, ranges_.size() - 1);
        width_ += s->slots;
        desc += ";" + s->label + ":" + s->field + ":" + std::string(to_string(s->type)) + ":" + std::to_string(s->slots);
    }
    fingerprint_ = fnv1a_hex(desc);
}

const SlotRange* Layout::find(std::string_view label) const {
    for (const auto& r : ranges_)
        if (r.label == label) return &r;
    return nullptr;
}

const std::string& Layout::label_of(std::size_t slot) const { return ranges_.at(owner_.at(slot)).label; }

std::vector<std::size_t> Layout::slots_of(const std::set<std::string>& labels) const {
    std::vector<std::size_t> out;
    for (const auto& r : ranges_)
        if (labels.count(r.label))
            for (std::size_t i = 0; i < r.count; ++i) out.push_back(r.begin + i);
    return out;
}

FieldValue field_value(const HandshakeFieldSet& fields, const AttributeSpec& spec) {
    auto it = extractors().find(spec.field);
    if (it == extractors().end())
        throw Error("attributes", "UnknownField", "no extractor for field '" + spec.field + "'");
    return it->second(fields);
}

std::optional<std::uint32_t> DictionaryStore::lookup(const std::string& field, const std::string& value) const {
    auto f = codes_.find(field);
    if (f == codes_.end()) return std::nullopt;
    auto v = f->second.find(value);
    if (v == f->second.end()) return std::nullopt;
    return v->second;
}

std::uint32_t DictionaryStore::code_for(const std::string& field, const std::string& value, EncodeMode mode) {
    if (auto code = lookup(field, value)) return *code;
    if (mode == EncodeMode::Infer) return kUnseenCode;
    if (frozen_)
        throw Error("attributes", "FrozenDictionary",
                    "new value '" + value + "' for field " + field + " on a frozen dictionary store");
    auto& m = codes_[field];
    auto code = static_cast<std::uint32_t>(m.size() + 1);
    if (code >= kGreaseCode) throw Error("attributes", "DictionaryFull", "field " + field + " exhausted its code space");
    m.emplace(value, code);
    return code;
}

std::size_t DictionaryStore::size(const std::string& field) const {
    auto f = codes_.find(field);
    return f == codes_.end() ? 0 : f->second.size();
}

std::size_t DictionaryStore::total_entries() const {
    std::size_t n = 0;
    for (const auto& [field, m] : codes_) n += m.size();
    return n;
}

std::vector<std::string> DictionaryStore::values(const std::string& field) const {
    std::vector<std::string> out(size(field));
    auto f = codes_.find(field);
    if (f != codes_.end())
        for (const auto& [value, code] : f->second) out[code - 1] = value;
    return out;
}

nlohmann::json DictionaryStore::to_json() const {
    nlohmann::json fields = nlohmann::json::object();
    for (const auto& [field, m] : codes_) fields[field] = values(field);
    return {{"schema", kSchema}, {"version", version()}, {"fields", fields}};
}

std::string DictionaryStore::version() const {
    std::string desc;
    for (const auto& [field, m] : codes_) {
        desc += field;
        for (const auto& v : values(field)) desc += '\x1f' + v;
        desc += '\x1e';
    }
    return fnv1a_hex(desc);
}

DictionaryStore DictionaryStore::from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("schema", "") != kSchema)
        throw Error("attributes", "SchemaVersionMismatch",
                    "dictionary schema must be " + std::string(kSchema));
    DictionaryStore store;
    try {
        for (auto it = j.at("fields").begin(); it != j.at("fields").end(); ++it) {
            auto& m = store.codes_[it.key()];
            std::uint32_t code = 1;
            for (const auto& v : it.value()) {
                if (!m.emplace(v.get<std::string>(), code++).second)
                    throw Error("attributes", "BadDictionary", "duplicate value in field " + it.key());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error("attributes", "BadDictionary", e.what());
    }
    store.frozen_ = true;
    return store;
}

void DictionaryStore::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("attributes", "IOError", "cannot write " + path);
    out << to_json().dump(1) << '\n';
}

DictionaryStore DictionaryStore::load(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path, "attributes"));
    } catch (const nlohmann::json::exception& e) {
        throw Error("attributes", "BadDictionary", e.what());
    }
    return from_json(j);
}

namespace {

void encode_one(const AttributeSpec& spec, const FieldValue& v, double* slot, DictionaryStore& dicts, EncodeMode mode,
                std::size_t& overflow) {
    if (!v.present) return;
    switch (spec.type) {
        case AttrType::Numerical:
        case AttrType::Length:
        case AttrType::Presence:
            *slot = v.number;
            break;
        case AttrType::Categorical:
            *slot = dicts.code_for(spec.label, v.category, mode);
            break;
        case AttrType::List: {
            std::size_t n = std::min(v.items.size(), spec.slots);
            overflow += v.items.size() - n;
            for (std::size_t i = 0; i < n; ++i)
                slot[i] = v.items[i] == kGreaseItem ? kGreaseCode : dicts.code_for(spec.label, v.items[i], mode);
            break;
        }
    }
}

}  // namespace

AttributeVector Encoder::blank() const {
    AttributeVector out;
    out.protocol = layout_.protocol();
    out.layout_fingerprint = layout_.fingerprint();
    out.values.assign(layout_.width(), 0.0);
    return out;
}

AttributeVector Encoder::encode(const HandshakeFieldSet& fields, DictionaryStore& dicts, EncodeMode mode) const {
    if (fields.protocol != layout_.protocol())
        throw Error("attributes", "ProtocolMismatch", "encoder is for " + std::string(to_string(layout_.protocol())));
    AttributeVector out = blank();
    const auto& specs = layout_.specs();
    const auto& ranges = layout_.ranges();
    for (std::size_t a = 0; a < specs.size(); ++a)
        encode_one(*specs[a], field_value(fields, *specs[a]), out.values.data() + ranges[a].begin, dicts, mode,
                   out.overflow_items);
    return out;
}

AttributeVector Encoder::encode(const FieldValues& values, DictionaryStore& dicts, EncodeMode mode) const {
    AttributeVector out = blank();
    const auto& specs = layout_.specs();
    const auto& ranges = layout_.ranges();
    for (std::size_t a = 0; a < specs.size(); ++a) {
        auto it = values.find(specs[a]->label);
        if (it == values.end()) continue;
        encode_one(*specs[a], it->second, out.values.data() + ranges[a].begin, dicts, mode, out.overflow_items);
    }
    return out;
}

FieldValues field_values(const HandshakeFieldSet& fields, const Layout& layout) {
    FieldValues out;
    for (const auto* spec : layout.specs()) out.emplace(spec->label, field_value(fields, *spec));
    return out;
}

nlohmann::json to_json(const FieldValue& v, AttrType type) {
    if (!v.present) return nullptr;
    switch (type) {
        case AttrType::Categorical: return v.category;
        case AttrType::List: return v.items;
        default: return v.number;
    }
}

FieldValue field_value_from_json(const nlohmann::json& j, AttrType type) {
    FieldValue v;
    if (j.is_null()) return v;
    v.present = true;
    switch (type) {
        case AttrType::Categorical: v.category = j.get<std::string>(); break;
        case AttrType::List: v.items = j.get<std::vector<std::string>>(); break;
        default: v.number = j.get<double>(); break;
    }
    return v;
}

AttributeVector encode(const HandshakeFieldSet& fields, const AttributeRegistry& registry, DictionaryStore& dicts,
                       EncodeMode mode) {
    return Encoder(registry, fields.protocol).encode(fields, dicts, mode);
}

std::set<std::string> cost_subset(const Layout& layout, const std::set<CostTier>& excluded,
                                  const std::map<std::string, double>& importance, double cutoff) {
    std::set<std::string> keep;
    for (const auto* spec : layout.specs()) {
        auto it = importance.find(spec->label);
        double score = it == importance.end() ? 0.0 : it->second;
        if (score < cutoff && excluded.count(spec->cost)) continue;
        keep.insert(spec->label);
    }
    return keep;
}

}  // namespace vidfp
