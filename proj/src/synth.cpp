#include "vidfp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "vidfp/embedded.hpp"
#include "vidfp/error.hpp"
#include "vidfp/pcap.hpp"

namespace vidfp {

namespace {

using nlohmann::json;

[[noreturn]] void bad_profile(const std::string& what) { throw Error("synth", "BadProfile", what); }

const std::map<std::string, std::uint16_t>& extension_codes() {
    static const std::map<std::string, std::uint16_t> m = {
        {"server_name", tls_ext::server_name},
        {"status_request", tls_ext::status_request},
        {"supported_groups", tls_ext::supported_groups},
        {"ec_point_formats", tls_ext::ec_point_formats},
        {"signature_algorithms", tls_ext::signature_algorithms},
        {"alpn", tls_ext::alpn},
        {"application_layer_protocol_negotiation", tls_ext::alpn},
        {"signed_certificate_timestamp", tls_ext::signed_certificate_timestamp},
        {"padding", tls_ext::padding},
        {"encrypt_then_mac", tls_ext::encrypt_then_mac},
        {"extended_master_secret", tls_ext::extended_master_secret},
        {"compress_certificate", tls_ext::compress_certificate},
        {"record_size_limit", tls_ext::record_size_limit},
        {"delegated_credentials", tls_ext::delegated_credentials},
        {"session_ticket", tls_ext::session_ticket},
        {"pre_shared_key", tls_ext::pre_shared_key},
        {"early_data", tls_ext::early_data},
        {"supported_versions", tls_ext::supported_versions},
        {"psk_key_exchange_modes", tls_ext::psk_key_exchange_modes},
        {"post_handshake_auth", tls_ext::post_handshake_auth},
        {"key_share", tls_ext::key_share},
        {"quic_transport_parameters", tls_ext::quic_transport_parameters},
        {"application_settings", tls_ext::application_settings},
        {"application_settings_old", tls_ext::application_settings_old},
        {"renegotiation_info", tls_ext::renegotiation_info},
    };
    return m;
}

std::uint16_t random_grease(Rng& rng) {
    auto n = static_cast<std::uint16_t>(std::uniform_int_distribution<int>(0, 15)(rng));
    return static_cast<std::uint16_t>((n << 12) | 0x0a00 | (n << 4) | 0x0a);
}

Bytes random_bytes(Rng& rng, std::size_t n) {
    Bytes b(n);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& x : b) x = static_cast<std::uint8_t>(d(rng));
    return b;
}

bool chance(Rng& rng, double p) {
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

std::uint64_t parse_number(const json& v) {
    if (v.is_number_unsigned() || v.is_number_integer()) return v.get<std::uint64_t>();
    if (v.is_string()) {
        try {
            return std::stoull(v.get<std::string>(), nullptr, 0);
        } catch (const std::exception&) {
        }
    }
    bad_profile("expected a number or hex string, got " + v.dump());
}

bool is_grease_token(const json& v) { return v.is_string() && v.get<std::string>() == "GREASE"; }

/// A 16-bit code list item: the wire value and its canonical decoded form.
std::pair<std::uint16_t, std::uint16_t> code16(const json& v, Rng& rng) {
    if (is_grease_token(v)) return {random_grease(rng), kGreaseCanonical};
    auto c = static_cast<std::uint16_t>(parse_number(v));
    return {c, canonical_grease(c)};
}

std::uint16_t compress_algorithm(const json& v) {
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        if (s == "zlib") return 1;
        if (s == "brotli") return 2;
        if (s == "zstd") return 3;
    }
    return static_cast<std::uint16_t>(parse_number(v));
}

std::size_t default_key_length(std::uint16_t group) {
    switch (group) {
        case 0x0017: return 65;
        case 0x0018: return 97;
        case 0x0019: return 133;
        case 0x001e: return 56;
        case 0x0100: return 256;
        case 0x6399:
        case 0x11ec: return 1216;
        case kGreaseCanonical: return 1;
        default: return 32;
    }
}

/// "y{n1-9}---sn-{h8}.googlevideo.com": {nA-B} draws an integer, {hN} draws
/// N lowercase alphanumerics.
std::string expand_host(const std::string& pattern, Rng& rng) {
    static const char alnum[] = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::string out;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        if (pattern[i] != '{') {
            out += pattern[i];
            continue;
        }
        auto close = pattern.find('}', i);
        if (close == std::string::npos) bad_profile("unterminated placeholder in " + pattern);
        std::string ph = pattern.substr(i + 1, close - i - 1);
        if (ph.size() >= 2 && ph[0] == 'h') {
            int n = std::stoi(ph.substr(1));
            std::uniform_int_distribution<int> d(0, 35);
            for (int k = 0; k < n; ++k) out += alnum[d(rng)];
        } else if (ph.size() >= 2 && ph[0] == 'n') {
            auto dash = ph.find('-');
            if (dash == std::string::npos) bad_profile("bad placeholder {" + ph + "}");
            int lo = std::stoi(ph.substr(1, dash - 1)), hi = std::stoi(ph.substr(dash + 1));
            out += std::to_string(std::uniform_int_distribution<int>(lo, hi)(rng));
        } else {
            bad_profile("bad placeholder {" + ph + "}");
        }
        i = close;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Profile resolution

std::uint64_t expect_u(const json& j, const char* key, std::uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    return parse_number(j.at(key));
}

json& find_extension_entry(json& exts, const std::string& type, bool required) {
    for (auto& e : exts)
        if (e.value("type", "") == type) return e;
    if (required) bad_profile("no extension '" + type + "' to edit");
    static json none;
    none = nullptr;
    return none;
}

void apply_edit(json& spec, const json& edit) {
    const std::string op = edit.at("op").get<std::string>();
    json& exts = spec["tls"]["extensions"];
    if (op == "remove_extension") {
        const auto type = edit.at("type").get<std::string>();
        auto it = std::find_if(exts.begin(), exts.end(), [&](const json& e) { return e.value("type", "") == type; });
        if (it == exts.end()) bad_profile("no extension '" + type + "' to remove");
        exts.erase(it);
    } else if (op == "insert_extension") {
        const json& ext = edit.at("extension");
        if (edit.contains("before")) {
            const auto anchor = edit.at("before").get<std::string>();
            auto it =
                std::find_if(exts.begin(), exts.end(), [&](const json& e) { return e.value("type", "") == anchor; });
            if (it == exts.end()) bad_profile("no extension '" + anchor + "' to insert before");
            exts.insert(it, ext);
        } else {
            exts.push_back(ext);
        }
    } else if (op == "set_extension") {
        const json& ext = edit.at("extension");
        find_extension_entry(exts, ext.at("type").get<std::string>(), true) = ext;
    } else if (op == "set_param") {
        json& params = spec["quic"]["transport_parameters"];
        const json& p = edit.at("param");
        const auto name = p.at("name").get<std::string>();
        bool done = false;
        for (auto& e : params)
            if (e.value("name", "") == name) {
                e = p;
                done = true;
            }
        if (!done) params.push_back(p);
    } else if (op == "remove_param") {
        json& params = spec["quic"]["transport_parameters"];
        const auto name = edit.at("name").get<std::string>();
        auto it = std::find_if(params.begin(), params.end(), [&](const json& e) { return e.value("name", "") == name; });
        if (it == params.end()) bad_profile("no transport parameter '" + name + "' to remove");
        params.erase(it);
    } else {
        bad_profile("unknown edit op '" + op + "'");
    }
}

json resolve(const json& node, const json& bases, std::set<std::string>& visiting) {
    json base = json::object();
    if (node.contains("extends")) {
        for (const auto& parent : node.at("extends").is_array() ? node.at("extends") : json::array({node.at("extends")})) {
            const auto name = parent.get<std::string>();
            if (!bases.contains(name)) bad_profile("unknown base '" + name + "'");
            if (!visiting.insert(name).second) bad_profile("cyclic extends through '" + name + "'");
            base.merge_patch(resolve(bases.at(name), bases, visiting));
            visiting.erase(name);
        }
    }
    json own = node;
    own.erase("extends");
    json edits = own.contains("edits") ? own.at("edits") : json::array();
    own.erase("edits");
    base.merge_patch(own);
    for (const auto& e : edits) apply_edit(base, e);
    return base;
}

PlatformProfile make_profile(const json& j) {
    PlatformProfile p;
    p.name = j.at("name").get<std::string>();
    p.provider = parse_provider(j.at("provider").get<std::string>());
    p.protocol = parse_protocol(j.at("protocol").get<std::string>());
    const auto& l = j.at("label");
    p.label = {l.at("device").get<std::string>(), l.at("os").get<std::string>(), l.at("agent").get<std::string>()};
    if (j.contains("jitter")) {
        for (std::size_t i = 0; i < j.at("jitter").size(); ++i) {
            const auto& r = j.at("jitter")[i];
            JitterRule rule;
            rule.kind = r.at("kind").get<std::string>();
            rule.name = r.value("name", rule.kind + "#" + std::to_string(i));
            rule.probability = r.value("probability", 1.0);
            rule.params = r;
            static const std::set<std::string> kinds = {"shuffle_extensions", "drop_extension", "choice",
                                                        "extension_value", "param_value"};
            if (!kinds.count(rule.kind)) bad_profile(p.name + ": unknown jitter kind '" + rule.kind + "'");
            p.jitter.push_back(std::move(rule));
        }
    }
    p.spec = j;
    for (const char* k : {"name", "provider", "protocol", "label", "jitter"}) p.spec.erase(k);
    if (!p.spec.contains("tls") || !p.spec["tls"].contains("cipher_suites"))
        bad_profile(p.name + ": template lacks tls.cipher_suites");
    if (p.protocol == Protocol::QUIC && !p.spec.contains("quic")) bad_profile(p.name + ": QUIC profile lacks quic section");
    if (p.protocol == Protocol::TCP && !p.spec.contains("tcp")) bad_profile(p.name + ": TCP profile lacks tcp section");
    return p;
}

// ---------------------------------------------------------------------------
// Jitter

void apply_jitter(json& spec, const JitterRule& rule, Rng& rng) {
    const json& r = rule.params;
    json& exts = spec["tls"]["extensions"];
    if (rule.kind == "shuffle_extensions") {
        std::set<std::string> fixed;
        for (const auto& f : r.value("fixed", json::array())) fixed.insert(f.get<std::string>());
        std::vector<std::size_t> movable;
        for (std::size_t i = 0; i < exts.size(); ++i)
            if (!fixed.count(exts[i].value("type", ""))) movable.push_back(i);
        std::vector<json> items;
        for (auto i : movable) items.push_back(exts[i]);
        std::shuffle(items.begin(), items.end(), rng);
        for (std::size_t k = 0; k < movable.size(); ++k) exts[movable[k]] = items[k];
    } else if (rule.kind == "drop_extension") {
        const auto type = r.at("type").get<std::string>();
        auto it = std::find_if(exts.begin(), exts.end(), [&](const json& e) { return e.value("type", "") == type; });
        if (it != exts.end()) exts.erase(it);
    } else {
        const json& values = r.at("values");
        if (!values.is_array() || values.empty()) bad_profile(rule.name + ": values must be a non-empty array");
        const json& pick = values[std::uniform_int_distribution<std::size_t>(0, values.size() - 1)(rng)];
        if (rule.kind == "choice") {
            spec[json::json_pointer(r.at("path").get<std::string>())] = pick;
        } else if (rule.kind == "extension_value") {
            json& e = find_extension_entry(exts, r.at("type").get<std::string>(), false);
            if (!e.is_null()) e["value"] = pick;
        } else {  // param_value
            for (auto& p : spec["quic"]["transport_parameters"])
                if (p.value("name", "") == r.at("name").get<std::string>()) p["value"] = pick;
        }
    }
}

// ---------------------------------------------------------------------------
// Transport parameters

struct BuiltParams {
    Bytes body;
    QuicTransportParams decoded;
};

BuiltParams build_transport_params(const json& list, const Bytes& scid, Rng& rng) {
    const auto& registry = [] () -> const ParamRegistry& {
        static const ParamRegistry r = ParamRegistry::defaults();
        return r;
    }();
    using QP = QuicTransportParams;
    static const std::map<std::string, std::optional<std::uint64_t> QP::*> numeric = {
        {"max_idle_timeout", &QP::max_idle_timeout},
        {"max_udp_payload_size", &QP::max_udp_payload_size},
        {"initial_max_data", &QP::initial_max_data},
        {"initial_max_stream_data_bidi_local", &QP::initial_max_stream_data_bidi_local},
        {"initial_max_stream_data_bidi_remote", &QP::initial_max_stream_data_bidi_remote},
        {"initial_max_stream_data_uni", &QP::initial_max_stream_data_uni},
        {"initial_max_streams_bidi", &QP::initial_max_streams_bidi},
        {"initial_max_streams_uni", &QP::initial_max_streams_uni},
        {"max_ack_delay", &QP::max_ack_delay},
        {"active_connection_id_limit", &QP::active_connection_id_limit},
        {"max_datagram_frame_size", &QP::max_datagram_frame_size},
    };
    static const std::map<std::string, std::optional<Bytes> QP::*> opaque = {
        {"google_connection_options", &QP::google_connection_options},
        {"user_agent", &QP::user_agent},
        {"google_version", &QP::google_version},
        {"version_information", &QP::version_information},
    };

    BuiltParams out;
    ByteWriter w;
    for (const auto& p : list) {
        QuicTransportParam param;
        std::string name = p.value("name", "");
        if (!name.empty()) {
            auto id = registry.id_of(name);
            if (!id) bad_profile("transport parameter '" + name + "' is not in the registry");
            param.id = *id;
        } else if (is_grease_token(p.at("id"))) {
            do {
                param.id = 31 * std::uniform_int_distribution<std::uint64_t>(0, 1u << 16)(rng) + 27;
            } while (registry.name_of(param.id));
        } else {
            param.id = parse_number(p.at("id"));
        }

        if (p.contains("value")) {
            ByteWriter v;
            v.varint(parse_number(p.at("value")));
            param.value = v.take();
        } else if (p.contains("hex")) {
            param.value = from_hex(p.at("hex").get<std::string>());
        } else if (p.contains("text")) {
            const auto& s = p.at("text").get_ref<const std::string&>();
            param.value.assign(s.begin(), s.end());
        } else if (name == "initial_source_connection_id") {
            param.value = scid;
        } else if (p.contains("length")) {
            param.value = random_bytes(rng, parse_number(p.at("length")));
        }

        auto& d = out.decoded;
        if (auto it = numeric.find(name); it != numeric.end()) {
            if (!p.contains("value")) bad_profile("transport parameter '" + name + "' needs a numeric value");
            d.*(it->second) = parse_number(p.at("value"));
        } else if (auto jt = opaque.find(name); jt != opaque.end()) {
            d.*(jt->second) = param.value;
        } else if (name == "disable_active_migration") {
            d.disable_active_migration = true;
        } else if (name == "grease_quic_bit") {
            d.grease_quic_bit = true;
        } else if (name == "initial_rtt") {
            d.initial_rtt = true;
        } else if (name == "initial_source_connection_id") {
            d.initial_source_connection_id_length = param.value.size();
        }
        d.ids.push_back(name.empty() && is_grease_transport_param(param.id) ? kGreaseTransportParam : param.id);

        w.varint(param.id);
        w.varint(param.value.size());
        w.bytes(param.value);
        d.params.push_back(std::move(param));
    }
    out.body = w.take();
    return out;
}

// ---------------------------------------------------------------------------
// ClientHello

struct BuiltChlo {
    Bytes message;
    ClientHello decoded;
};

std::vector<std::uint16_t> code_list(const json& values, Rng& rng, ByteWriter& w, std::size_t len_width) {
    std::vector<std::uint16_t> decoded;
    ByteWriter items;
    for (const auto& v : values) {
        auto [wire, canon] = code16(v, rng);
        items.u16(wire);
        decoded.push_back(canon);
    }
    w.prefixed(len_width, items.buffer());
    return decoded;
}

std::vector<std::uint8_t> byte_list(const json& values, ByteWriter& w) {
    std::vector<std::uint8_t> decoded;
    for (const auto& v : values) decoded.push_back(static_cast<std::uint8_t>(parse_number(v)));
    w.prefixed(1, decoded);
    return decoded;
}

std::vector<std::string> protocol_list(const json& values, ByteWriter& w) {
    std::vector<std::string> decoded;
    ByteWriter items;
    for (const auto& v : values) {
        decoded.push_back(v.get<std::string>());
        ByteWriter one;
        one.bytes(decoded.back());
        items.prefixed(1, one.buffer());
    }
    w.prefixed(2, items.buffer());
    return decoded;
}

/// Serializes one extension body and records its decoded value in `ch`.
Bytes build_extension(const std::string& type, std::uint16_t code, const json& e, ClientHello& ch,
                      const std::string& sni, const Bytes& tp_body, Rng& rng) {
    ByteWriter w;
    const json value = e.value("value", json());
    switch (code) {
        case tls_ext::server_name: {
            ByteWriter entry;
            entry.u8(0);
            ByteWriter host;
            host.bytes(sni);
            entry.prefixed(2, host.buffer());
            w.prefixed(2, entry.buffer());
            ch.server_name = sni;
            break;
        }
        case tls_ext::status_request: {
            auto t = static_cast<std::uint8_t>(value.is_null() ? 1 : parse_number(value));
            w.u8(t);
            w.u16(0);
            w.u16(0);
            ch.status_request_type = t;
            break;
        }
        case tls_ext::supported_groups: ch.supported_groups = code_list(value, rng, w, 2); break;
        case tls_ext::ec_point_formats: ch.ec_point_formats = byte_list(value, w); break;
        case tls_ext::signature_algorithms: ch.signature_algorithms = code_list(value, rng, w, 2); break;
        case tls_ext::alpn: ch.alpn = protocol_list(value, w); break;
        case tls_ext::signed_certificate_timestamp: ch.signed_certificate_timestamp_length = 0; break;
        case tls_ext::encrypt_then_mac: ch.encrypt_then_mac = true; break;
        case tls_ext::extended_master_secret: ch.extended_master_secret = true; break;
        case tls_ext::compress_certificate: {
            ByteWriter items;
            std::vector<std::uint16_t> algs;
            for (const auto& v : value) {
                algs.push_back(compress_algorithm(v));
                items.u16(algs.back());
            }
            w.prefixed(1, items.buffer());
            ch.compress_certificate = algs;
            break;
        }
        case tls_ext::record_size_limit:
            ch.record_size_limit = static_cast<std::uint16_t>(parse_number(value));
            w.u16(*ch.record_size_limit);
            break;
        case tls_ext::delegated_credentials: ch.delegated_credentials = code_list(value, rng, w, 2); break;
        case tls_ext::session_ticket: {
            auto n = expect_u(e, "length", 0);
            w.bytes(random_bytes(rng, n));
            ch.session_ticket_length = n;
            break;
        }
        case tls_ext::pre_shared_key: {
            auto id_len = expect_u(e, "identity_length", 64);
            ByteWriter ids, identity, binders, binder;
            identity.bytes(random_bytes(rng, id_len));
            ids.prefixed(2, identity.buffer());
            ids.u32(static_cast<std::uint32_t>(rng()));
            w.prefixed(2, ids.buffer());
            binder.bytes(random_bytes(rng, 32));
            binders.prefixed(1, binder.buffer());
            w.prefixed(2, binders.buffer());
            ch.pre_shared_key = true;
            break;
        }
        case tls_ext::early_data: ch.early_data_length = 0; break;
        case tls_ext::supported_versions: ch.supported_versions = code_list(value, rng, w, 1); break;
        case tls_ext::psk_key_exchange_modes: ch.psk_key_exchange_modes = byte_list(value, w); break;
        case tls_ext::post_handshake_auth: ch.post_handshake_auth = true; break;
        case tls_ext::key_share: {
            ByteWriter shares;
            std::vector<std::uint16_t> groups;
            for (const auto& v : value) {
                const json& g = v.is_object() ? v.at("group") : v;
                auto [wire, canon] = code16(g, rng);
                std::size_t len = v.is_object() && v.contains("length") ? parse_number(v.at("length"))
                                                                         : default_key_length(canon);
                shares.u16(wire);
                shares.prefixed(2, random_bytes(rng, len));
                groups.push_back(canon);
            }
            w.prefixed(2, shares.buffer());
            ch.key_share_groups = groups;
            break;
        }
        case tls_ext::application_settings:
        case tls_ext::application_settings_old: ch.application_settings = protocol_list(value, w); break;
        case tls_ext::renegotiation_info:
            w.u8(0);
            ch.renegotiation_info = true;
            break;
        case tls_ext::quic_transport_parameters:
            w.bytes(tp_body);
            ch.quic_transport_parameters = tp_body;
            break;
        default:
            if (e.contains("hex")) {
                w.bytes(from_hex(e.at("hex").get<std::string>()));
            } else if (e.contains("length")) {
                w.bytes(random_bytes(rng, parse_number(e.at("length"))));
            } else if (type != "GREASE" && !e.contains("empty")) {
                bad_profile("extension '" + type + "' needs hex or length");
            }
            break;
    }
    return w.take();
}

BuiltChlo build_chlo(const json& tls, const std::string& sni, const Bytes& tp_body, Rng& rng) {
    BuiltChlo out;
    ClientHello& ch = out.decoded;
    ch.legacy_version = static_cast<std::uint16_t>(parse_number(tls.value("legacy_version", json("0x0303"))));
    ch.random = random_bytes(rng, 32);
    ch.session_id = random_bytes(rng, expect_u(tls, "session_id_length", 32));
    ByteWriter suites;
    for (const auto& v : tls.at("cipher_suites")) {
        auto [wire, canon] = code16(v, rng);
        suites.u16(wire);
        ch.cipher_suites.push_back(canon);
    }
    for (const auto& v : tls.value("compression_methods", json::array({0})))
        ch.compression_methods.push_back(static_cast<std::uint8_t>(parse_number(v)));

    ByteWriter head;
    head.u16(ch.legacy_version);
    head.bytes(ch.random);
    head.prefixed(1, ch.session_id);
    head.prefixed(2, suites.buffer());
    head.prefixed(1, ch.compression_methods);

    std::optional<std::size_t> padding_at;
    std::uint64_t pad_to = 0;
    if (tls.contains("extensions")) {
        ch.has_extensions_block = true;
        for (const auto& e : tls.at("extensions")) {
            const auto type = e.at("type").get<std::string>();
            std::uint16_t code;
            if (type == "GREASE") {
                code = random_grease(rng);
            } else if (auto it = extension_codes().find(type); it != extension_codes().end()) {
                code = it->second;
            } else {
                code = static_cast<std::uint16_t>(parse_number(json(type)));
            }
            TlsExtension ext;
            ext.type = code;
            if (code == tls_ext::padding) {
                padding_at = ch.extensions.size();
                pad_to = expect_u(e, "pad_to", 0);
                ext.body.assign(expect_u(e, "length", 0), 0);
            } else {
                ext.body = build_extension(type, code, e, ch, sni, tp_body, rng);
            }
            ch.extension_types.push_back(canonical_grease(code));
            ch.extensions.push_back(std::move(ext));
        }
    }

    auto exts_size = [&] {
        std::size_t n = 0;
        for (const auto& e : ch.extensions) n += 4 + e.body.size();
        return n;
    };
    if (padding_at && pad_to > 0) {
        // Pad the whole handshake message up to `pad_to` bytes when short of it.
        std::size_t unpadded = 4 + head.size() + 2 + exts_size();
        std::size_t len = unpadded < pad_to ? pad_to - unpadded : 0;
        ch.extensions[*padding_at].body.assign(len, 0);
    }
    if (padding_at) ch.padding_length = ch.extensions[*padding_at].body.size();

    ByteWriter body;
    body.bytes(head.buffer());
    if (ch.has_extensions_block) {
        ch.extensions_length = static_cast<std::uint16_t>(exts_size());
        body.u16(ch.extensions_length);
        for (const auto& e : ch.extensions) {
            body.u16(e.type);
            body.prefixed(2, e.body);
        }
    }
    ch.handshake_length = static_cast<std::uint32_t>(body.size());
    ByteWriter msg;
    msg.u8(1);
    msg.u24(ch.handshake_length);
    msg.bytes(body.buffer());
    out.message = msg.take();
    return out;
}

// ---------------------------------------------------------------------------
// TCP SYN

struct BuiltSyn {
    Bytes options;
    std::uint8_t flags = 0;
    TcpHandshakeFields decoded;
};

BuiltSyn build_syn(const json& tcp, Rng& rng) {
    BuiltSyn out;
    static const std::map<std::string, std::uint8_t> flag_bits = {
        {"FIN", tcp_flag::FIN}, {"SYN", tcp_flag::SYN}, {"RST", tcp_flag::RST}, {"PSH", tcp_flag::PSH},
        {"ACK", tcp_flag::ACK}, {"URG", tcp_flag::URG}, {"ECE", tcp_flag::ECE}, {"CWR", tcp_flag::CWR}};
    for (const auto& f : tcp.value("flags", json::array({"SYN"}))) {
        auto it = flag_bits.find(f.get<std::string>());
        if (it == flag_bits.end()) bad_profile("unknown TCP flag " + f.dump());
        out.flags |= it->second;
    }
    auto& d = out.decoded;
    d.cwr = out.flags & tcp_flag::CWR;
    d.ece = out.flags & tcp_flag::ECE;
    d.urg = out.flags & tcp_flag::URG;
    d.ack = out.flags & tcp_flag::ACK;
    d.psh = out.flags & tcp_flag::PSH;
    d.rst = out.flags & tcp_flag::RST;
    d.syn = out.flags & tcp_flag::SYN;
    d.fin = out.flags & tcp_flag::FIN;
    d.window_size = static_cast<std::uint16_t>(parse_number(tcp.at("window")));

    ByteWriter w;
    for (const auto& o : tcp.value("options", json::array())) {
        const auto kind = o.at("kind").get<std::string>();
        if (kind == "nop") {
            w.u8(1);
        } else if (kind == "eol") {
            w.u8(0);
        } else if (kind == "mss") {
            d.mss = static_cast<std::uint16_t>(parse_number(o.at("value")));
            w.u8(2);
            w.u8(4);
            w.u16(*d.mss);
        } else if (kind == "wscale") {
            d.window_scale = static_cast<std::uint8_t>(parse_number(o.at("value")));
            w.u8(3);
            w.u8(3);
            w.u8(*d.window_scale);
        } else if (kind == "sack_permitted") {
            d.sack_permitted = true;
            w.u8(4);
            w.u8(2);
        } else if (kind == "timestamps") {
            w.u8(8);
            w.u8(10);
            w.u32(static_cast<std::uint32_t>(rng()));
            w.u32(0);
        } else {
            bad_profile("unknown TCP option '" + kind + "'");
        }
    }
    while (w.size() % 4) w.u8(1);
    if (w.size() > 40) bad_profile("TCP options exceed 40 bytes");
    out.options = w.take();
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

const ProfileSet& ProfileSet::defaults() {
    static const ProfileSet set = from_json(embedded::profiles_json);
    return set;
}

ProfileSet ProfileSet::from_json(std::string_view json_text) {
    ProfileSet set;
    try {
        auto j = json::parse(json_text);
        if (j.value("schema", "") != "vidfp.profiles/1") bad_profile("profile schema must be vidfp.profiles/1");
        const json bases = j.value("bases", json::object());
        std::set<std::string> names;
        for (const auto& node : j.at("profiles")) {
            std::set<std::string> visiting;
            auto p = make_profile(resolve(node, bases, visiting));
            if (!names.insert(p.name).second) bad_profile("duplicate profile " + p.name);
            set.profiles_.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        bad_profile(e.what());
    }
    return set;
}

ProfileSet ProfileSet::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("synth", "IOError", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::vector<const PlatformProfile*> ProfileSet::select(Provider provider, Protocol protocol) const {
    std::vector<const PlatformProfile*> out;
    for (const auto& p : profiles_)
        if (p.provider == provider && p.protocol == protocol) out.push_back(&p);
    return out;
}

const PlatformProfile* ProfileSet::find(std::string_view name) const {
    for (const auto& p : profiles_)
        if (p.name == name) return &p;
    return nullptr;
}

SynthSample generate(const PlatformProfile& profile, Rng& rng) {
    SynthSample s;
    s.profile = profile.name;
    s.label = profile.label;
    s.provider = profile.provider;
    s.protocol = profile.protocol;

    json spec = profile.spec;
    try {
        for (const auto& rule : profile.jitter) {
            if (!chance(rng, rule.probability)) continue;
            apply_jitter(spec, rule, rng);
            s.fired.push_back(rule.name);
        }

        const json hosts = spec.value("sni", json::array());
        if (!hosts.empty()) {
            if (profile.jitter.empty()) {
                // Without jitter rules the hello must not vary, so the host is fixed per profile.
                std::uint64_t h = 1469598103934665603ull;
                for (unsigned char c : profile.name) h = (h ^ c) * 1099511628211ull;
                Rng fixed(h);
                s.sni = expand_host(hosts[0].get<std::string>(), fixed);
            } else {
                s.sni = expand_host(
                    hosts[std::uniform_int_distribution<std::size_t>(0, hosts.size() - 1)(rng)].get<std::string>(), rng);
            }
        }
        s.ttl = static_cast<std::uint8_t>(expect_u(spec.value("ip", json::object()), "ttl", 64));

        HandshakeFieldSet& f = s.fields;
        f.protocol = profile.protocol;
        f.ttl = s.ttl;
        Bytes tp_body;
        if (profile.protocol == Protocol::TCP) {
            auto syn = build_syn(spec.at("tcp"), rng);
            s.tcp_flags = syn.flags;
            s.tcp_window = syn.decoded.window_size;
            s.tcp_options = syn.options;
            f.tcp = syn.decoded;
            f.init_packet_size = static_cast<std::uint32_t>(kIpv4HeaderLen + 20 + syn.options.size());
            s.tls_record_split = expect_u(spec.at("tcp"), "record_split", 0);
        } else {
            const json& q = spec.at("quic");
            s.quic_version = static_cast<std::uint32_t>(expect_u(q, "version", kQuicVersion1));
            s.quic_dcid = random_bytes(rng, expect_u(q, "dcid_length", 8));
            s.quic_scid = random_bytes(rng, expect_u(q, "scid_length", 0));
            s.quic_token = random_bytes(rng, expect_u(q, "token_length", 0));
            s.quic_datagram_size = expect_u(q, "datagram_size", 1200);
            auto tp = build_transport_params(q.value("transport_parameters", json::array()), s.quic_scid, rng);
            tp_body = tp.body;
            f.quic_params = std::move(tp.decoded);
            f.quic = QuicHeaderFields{s.quic_version, s.quic_dcid, s.quic_scid, s.quic_token.size(), s.quic_datagram_size};
            f.init_packet_size = static_cast<std::uint32_t>(kIpv4HeaderLen + kUdpHeaderLen + s.quic_datagram_size);
        }
        auto chlo = build_chlo(spec.at("tls"), s.sni, tp_body, rng);
        s.chlo_message = std::move(chlo.message);
        f.chlo = std::move(chlo.decoded);
        // The template may leave out the transport parameter extension.
        if (profile.protocol == Protocol::QUIC && !f.chlo.quic_transport_parameters) f.quic_params.reset();
    } catch (const json::exception& e) {
        bad_profile(profile.name + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        bad_profile(profile.name + ": " + e.what());
    }
    return s;
}

PlatformProfile perturb(const PlatformProfile& profile, Rng& rng, int changes) {
    PlatformProfile p = profile;
    p.name += "~perturbed";
    json& spec = p.spec;
    json& exts = spec["tls"]["extensions"];
    for (int c = 0; c < changes; ++c) {
        switch (std::uniform_int_distribution<int>(0, 4)(rng)) {
            case 0: {
                static const int ttls[] = {32, 64, 128, 255};
                spec["ip"]["ttl"] = ttls[std::uniform_int_distribution<int>(0, 3)(rng)];
                break;
            }
            case 1: {
                json& suites = spec["tls"]["cipher_suites"];
                if (suites.size() > 2) {
                    auto i = std::uniform_int_distribution<std::size_t>(1, suites.size() - 1)(rng);
                    std::swap(suites[i], suites[i - 1]);
                }
                break;
            }
            case 2:
                if (exts.size() > 3) exts.erase(exts.begin() + std::uniform_int_distribution<long>(0, static_cast<long>(exts.size()) - 1)(rng));
                break;
            case 3:
                exts.push_back({{"type", "0x" + to_hex(Bytes{0xfe, static_cast<std::uint8_t>(rng() & 0xff)})},
                                {"length", std::uniform_int_distribution<int>(0, 64)(rng)}});
                break;
            default:
                if (p.protocol == Protocol::TCP) {
                    spec["tcp"]["window"] = std::uniform_int_distribution<int>(8192, 65535)(rng);
                } else {
                    spec["quic"]["datagram_size"] = std::uniform_int_distribution<int>(1200, 1450)(rng);
                }
                break;
        }
    }
    return p;
}

Bytes build_tls_records(const SynthSample& sample) {
    ByteWriter w;
    ByteSpan msg(sample.chlo_message);
    std::size_t first = sample.tls_record_split > 0 && sample.tls_record_split < msg.size() ? sample.tls_record_split
                                                                                             : msg.size();
    std::size_t pos = 0;
    while (pos < msg.size()) {
        std::size_t n = pos == 0 ? first : std::min<std::size_t>(msg.size() - pos, 16384);
        n = std::min<std::size_t>(n, 16384);
        w.u8(22);
        w.u16(0x0301);
        w.prefixed(2, msg.subspan(pos, n));
        pos += n;
    }
    return w.take();
}

std::vector<Bytes> build_quic_initials(const SynthSample& sample) {
    auto keys = derive_initial_keys(sample.quic_dcid, sample.quic_version);
    std::vector<Bytes> out;
    ByteSpan msg(sample.chlo_message);
    std::size_t offset = 0;
    for (std::uint64_t pn = 0; offset < msg.size(); ++pn) {
        if (pn >= kMaxQuicInitials) throw Error("synth", "ChloTooLarge", sample.profile + ": ClientHello needs more than 3 Initials");
        InitialPacketSpec spec;
        spec.version = sample.quic_version;
        spec.dcid = sample.quic_dcid;
        spec.scid = sample.quic_scid;
        spec.token = sample.quic_token;
        spec.packet_number = pn;
        std::size_t room = sample.quic_datagram_size - initial_overhead(spec);
        std::size_t header = 1 + varint_size(offset) + 2;
        if (room <= header + 1) throw Error("synth", "BadProfile", "datagram too small for a CRYPTO frame");
        std::size_t n = std::min(msg.size() - offset, room - header);
        ByteWriter frames;
        frames.u8(0x06);
        frames.varint(offset);
        frames.varint(n, 2);
        frames.bytes(msg.subspan(offset, n));
        frames.zeros(room - frames.size());
        spec.plaintext = frames.take();
        out.push_back(encrypt_initial(spec, keys));
        offset += n;
    }
    return out;
}

FlowEndpoints endpoints_for(const SynthSample& sample, std::size_t index) {
    FlowEndpoints e;
    e.client = IpAddress::v4(0x0a000000u + static_cast<std::uint32_t>((index >> 14) + 1));
    e.client_port = static_cast<std::uint16_t>(49152 + (index & 0x3fff));
    std::uint32_t base = 0;
    switch (sample.provider) {
        case Provider::YT: base = 0x8efa0000; break;  // 142.250.0.0
        case Provider::NF: base = 0x2d390000; break;  // 45.57.0.0
        case Provider::DN: base = 0x68100000; break;  // 104.16.0.0
        case Provider::AP: base = 0x12400000; break;  // 18.64.0.0
        case Provider::None: base = 0xc6336400; break;  // 198.51.100.0
    }
    e.server = IpAddress::v4(base + 1 + static_cast<std::uint32_t>(index % 250));
    e.server_port = 443;
    e.transport = sample.protocol == Protocol::QUIC ? Transport::UDP : Transport::TCP;
    return e;
}

namespace {

/// Lazily produces the frames of one synthetic flow in time order.
class FlowFrames {
public:
    FlowFrames(const SynthSample& s, FlowEndpoints ep, std::size_t index) : s_(s), ep_(ep) {
        isn_client_ = 1000u + static_cast<std::uint32_t>(index) * 7919u;
        isn_server_ = 500000u + static_cast<std::uint32_t>(index) * 104729u;
        TimestampNs t = s.start_ns;
        if (s.protocol == Protocol::TCP) {
            TcpSegmentSpec syn = client_tcp(s.tcp_flags, isn_client_, 0);
            syn.window = s.tcp_window;
            syn.options = s.tcp_options;
            push(t, build_tcp_frame(syn));
            TcpSegmentSpec synack = server_tcp(tcp_flag::SYN | tcp_flag::ACK, isn_server_, isn_client_ + 1);
            push(t + 12'000'000, build_tcp_frame(synack));
            push(t + 24'000'000, build_tcp_frame(client_tcp(tcp_flag::ACK, isn_client_ + 1, isn_server_ + 1)));
            records_ = build_tls_records(s);
            std::uint32_t seq = isn_client_ + 1;
            for (std::size_t pos = 0; pos < records_.size(); pos += 1460) {
                std::size_t n = std::min<std::size_t>(1460, records_.size() - pos);
                auto seg = client_tcp(tcp_flag::ACK | tcp_flag::PSH, seq, isn_server_ + 1);
                seg.payload = ByteSpan(records_).subspan(pos, n);
                push(t + 25'000'000 + static_cast<TimestampNs>(pos / 1460) * 10'000, build_tcp_frame(seg));
                seq += static_cast<std::uint32_t>(n);
            }
        } else {
            auto initials = build_quic_initials(s);
            for (std::size_t i = 0; i < initials.size(); ++i) {
                datagrams_.push_back(std::move(initials[i]));
                UdpDatagramSpec d;
                d.src = ep_.client;
                d.dst = ep_.server;
                d.src_port = ep_.client_port;
                d.dst_port = ep_.server_port;
                d.ttl = s.ttl;
                d.payload = datagrams_.back();
                push(t + static_cast<TimestampNs>(i) * 20'000, build_udp_frame(d));
            }
        }
        down_start_ = t + 40'000'000;
    }

    bool done() const { return next_ == frames_.size() && down_sent_ >= s_.downstream.packets; }

    TimestampNs next_ts() const {
        if (next_ < frames_.size()) return frames_[next_].first;
        return down_ts(down_sent_);
    }

    /// Frame and original length of the next packet.
    std::pair<Bytes, std::uint32_t> pop() {
        if (next_ < frames_.size()) {
            auto& f = frames_[next_++];
            auto len = static_cast<std::uint32_t>(f.second.size());
            return {std::move(f.second), len};
        }
        std::uint32_t payload = s_.downstream.payload_size;
        Bytes frame;
        if (s_.protocol == Protocol::TCP) {
            auto seg = server_tcp(tcp_flag::ACK, isn_server_ + 1 + static_cast<std::uint32_t>(down_sent_ * payload),
                                  isn_client_ + 1 + static_cast<std::uint32_t>(records_.size()));
            seg.claimed_payload_len = payload;
            frame = build_tcp_frame(seg);
        } else {
            UdpDatagramSpec d;
            d.src = ep_.server;
            d.dst = ep_.client;
            d.src_port = ep_.server_port;
            d.dst_port = ep_.client_port;
            d.ttl = 57;
            d.claimed_payload_len = payload;
            frame = build_udp_frame(d);
        }
        ++down_sent_;
        auto orig = static_cast<std::uint32_t>(frame.size() + payload);
        return {std::move(frame), orig};
    }

private:
    TimestampNs down_ts(std::uint64_t k) const {
        const auto& d = s_.downstream;
        double step = d.packets ? d.duration_s / static_cast<double>(d.packets) : 0.0;
        return down_start_ + static_cast<TimestampNs>(std::llround((static_cast<double>(k) + 0.5) * step * 1e9));
    }

    void push(TimestampNs t, Bytes frame) { frames_.emplace_back(t, std::move(frame)); }

    TcpSegmentSpec client_tcp(std::uint8_t flags, std::uint32_t seq, std::uint32_t ack) const {
        TcpSegmentSpec seg;
        seg.src = ep_.client;
        seg.dst = ep_.server;
        seg.src_port = ep_.client_port;
        seg.dst_port = ep_.server_port;
        seg.ttl = s_.ttl;
        seg.flags = flags;
        seg.seq = seq;
        seg.ack = ack;
        seg.window = s_.tcp_window;
        return seg;
    }

    TcpSegmentSpec server_tcp(std::uint8_t flags, std::uint32_t seq, std::uint32_t ack) const {
        TcpSegmentSpec seg;
        seg.src = ep_.server;
        seg.dst = ep_.client;
        seg.src_port = ep_.server_port;
        seg.dst_port = ep_.client_port;
        seg.ttl = 57;
        seg.flags = flags;
        seg.seq = seq;
        seg.ack = ack;
        seg.window = 65535;
        return seg;
    }

    const SynthSample& s_;
    FlowEndpoints ep_;
    std::uint32_t isn_client_ = 0, isn_server_ = 0;
    Bytes records_;
    std::vector<Bytes> datagrams_;
    std::vector<std::pair<TimestampNs, Bytes>> frames_;
    std::size_t next_ = 0;
    TimestampNs down_start_ = 0;
    std::uint64_t down_sent_ = 0;
};

}  // namespace

std::vector<FlowEndpoints> serialize_to_pcap(const std::vector<SynthSample>& samples, const std::string& path) {
    std::vector<FlowEndpoints> endpoints;
    std::vector<std::unique_ptr<FlowFrames>> flows;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        endpoints.push_back(endpoints_for(samples[i], i));
        flows.push_back(std::make_unique<FlowFrames>(samples[i], endpoints.back(), i));
    }
    std::unique_ptr<PcapWriter> writer;
    try {
        writer = std::make_unique<PcapWriter>(path, LinkType::Ethernet, true);
    } catch (const Error& e) {
        throw Error("synth", "IOError", e.what());
    }
    using Entry = std::pair<TimestampNs, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    for (std::size_t i = 0; i < flows.size(); ++i)
        if (!flows[i]->done()) heap.emplace(flows[i]->next_ts(), i);
    while (!heap.empty()) {
        auto [ts, i] = heap.top();
        heap.pop();
        auto [frame, orig] = flows[i]->pop();
        writer->write(ts, frame, orig);
        if (!flows[i]->done()) heap.emplace(flows[i]->next_ts(), i);
    }
    writer->flush();
    return endpoints;
}

void write_labels_csv(const std::vector<SynthSample>& samples, const std::vector<FlowEndpoints>& endpoints,
                      const std::string& path) {
    if (samples.size() != endpoints.size()) throw std::invalid_argument("samples and endpoints differ in size");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("synth", "IOError", "cannot write " + path);
    out << "src,dst,sport,dport,proto,provider,device,os,agent\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& e = endpoints[i];
        const auto& l = samples[i].label;
        out << e.client.to_string() << ',' << e.server.to_string() << ',' << e.client_port << ',' << e.server_port
            << ',' << (e.transport == Transport::UDP ? "UDP" : "TCP") << ',' << to_string(samples[i].provider) << ','
            << l.device << ',' << l.os << ',' << l.agent << '\n';
    }
}

}  // namespace vidfp
