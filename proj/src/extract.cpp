#include "vidfp/extract.hpp"

#include <algorithm>

#include "vidfp/error.hpp"
#include "vidfp/pcap.hpp"
#include "vidfp/tls.hpp"

namespace vidfp {

using nlohmann::json;

namespace {

constexpr TimestampNs kSweepInterval = kNsPerSec;

void mark_unavailable(FlowRecord& r, std::string code) {
    r.chlo_state = ChloState::Unavailable;
    r.chlo_error = std::move(code);
    r.handshake_buffer = {};
    r.quic_initials = {};
}

HandshakeFieldSet base_fields(const FlowRecord& r) {
    HandshakeFieldSet f;
    f.protocol = r.protocol;
    if (r.first_client_packet) {
        f.init_packet_size = r.first_client_packet->total_ip_length;
        f.ttl = r.first_client_packet->ttl.value_or(0);
    }
    return f;
}

std::optional<HandshakeFieldSet> parse_tcp(FlowRecord& r, bool final) {
    auto ex = extract_chlo(r.handshake_buffer);
    switch (ex.status) {
        case ChloExtractStatus::Complete:
            break;
        case ChloExtractStatus::NotTLS:
            mark_unavailable(r, "tls.NotTLS");
            return std::nullopt;
        case ChloExtractStatus::Malformed:
            mark_unavailable(r, "tls.MalformedRecord");
            return std::nullopt;
        case ChloExtractStatus::Incomplete:
            if (final || r.buffer_capped) mark_unavailable(r, "tls.Incomplete");
            return std::nullopt;
    }
    HandshakeFieldSet f = base_fields(r);
    f.chlo = parse_client_hello(ex.body);
    if (r.first_client_packet) f.tcp = parse_syn(*r.first_client_packet);
    return f;
}

std::optional<HandshakeFieldSet> parse_quic(FlowRecord& r, const ExtractConfig& cfg, bool final) {
    if (r.quic_initials.empty()) {
        if (final) mark_unavailable(r, "quic.NoInitial");
        return std::nullopt;
    }
    const Bytes& first = r.quic_initials.front();
    if (!is_quic_initial(first, cfg.extra_quic_versions)) {
        mark_unavailable(r, "quic.NotInitial");
        return std::nullopt;
    }
    // Every client Initial is protected with keys from the first DCID.
    if (first.size() < 6 || first[5] > 20 || first.size() < 6u + first[5]) {
        mark_unavailable(r, "quic.Malformed");
        return std::nullopt;
    }
    std::uint32_t version = load_be32(first.data() + 1);
    ByteSpan dcid(first.data() + 6, first[5]);
    auto keys = derive_initial_keys(dcid, version);

    std::vector<CryptoFrame> frames;
    std::optional<QuicHeaderFields> header;
    for (const auto& d : r.quic_initials) {
        if (!is_quic_initial(d, cfg.extra_quic_versions)) continue;
        auto pkt = decrypt_initial(d, keys);
        if (!header) header = pkt.header;
        auto fs = parse_initial_frames(pkt.plaintext);
        frames.insert(frames.end(), std::make_move_iterator(fs.begin()), std::make_move_iterator(fs.end()));
    }
    const bool last_chance = final || r.quic_initials.size() >= kMaxQuicInitials || r.buffer_capped;
    auto re = reassemble_crypto(frames, last_chance);
    if (re.status == CryptoStatus::Gap) {
        mark_unavailable(r, "quic.CryptoGap");
        return std::nullopt;
    }
    if (re.status == CryptoStatus::Incomplete) {
        if (last_chance) mark_unavailable(r, "quic.Incomplete");
        return std::nullopt;
    }
    HandshakeFieldSet f = base_fields(r);
    f.quic = *header;
    f.chlo = parse_client_hello(re.body);
    if (f.chlo.quic_transport_parameters)
        f.quic_params = parse_transport_params(*f.chlo.quic_transport_parameters, cfg.params);
    return f;
}

json telemetry_json(const FlowTelemetry& t) {
    return {{"first_ns", t.first_ns},       {"last_ns", t.last_ns},
            {"duration_s", t.duration_s()}, {"up_bytes", t.up_bytes},
            {"down_bytes", t.down_bytes},   {"up_packets", t.up_packets},
            {"down_packets", t.down_packets}, {"active_bins", t.active_bins()},
            {"mean_down_mbps", t.mean_down_mbps()}, {"peak_down_mbps", t.peak_down_mbps()}};
}

}  // namespace

std::optional<HandshakeFieldSet> try_parse_handshake(FlowRecord& record, const ExtractConfig& config, bool final) {
    if (record.chlo_state != ChloState::Pending) return std::nullopt;
    std::optional<HandshakeFieldSet> f;
    try {
        f = record.protocol == Protocol::TCP ? parse_tcp(record, final) : parse_quic(record, config, final);
    } catch (const Error& e) {
        mark_unavailable(record, e.qualified_code());
        return std::nullopt;
    }
    if (!f) return std::nullopt;
    record.chlo_state = ChloState::Parsed;
    record.sni = f->chlo.server_name.value_or("");
    std::tie(record.provider, record.role) = config.providers.detect(record.sni, record.server_port);
    record.handshake_buffer = {};
    record.quic_initials = {};
    return f;
}

FlowExtractor::FlowExtractor(ExtractConfig config, Sink sink) : config_(std::move(config)), sink_(std::move(sink)) {}

void FlowExtractor::finalize(Entry& e) {
    try_parse_handshake(e.record, config_, true);
    sink_(ExtractedFlow{std::move(e.record), std::move(e.fields)});
}

void FlowExtractor::sweep(TimestampNs now) {
    std::vector<FlowKey> idle;
    for (const auto& [k, e] : table_)
        if (now - e.record.telemetry.last_ns > config_.idle_timeout) idle.push_back(k);
    // Finalization order must not depend on hash-table iteration.
    std::sort(idle.begin(), idle.end(), [&](const FlowKey& a, const FlowKey& b) {
        const auto& ta = table_.at(a).record.telemetry;
        const auto& tb = table_.at(b).record.telemetry;
        return std::tie(ta.first_ns, a) < std::tie(tb.first_ns, b);
    });
    for (const auto& k : idle) {
        auto it = table_.find(k);
        finalize(it->second);
        table_.erase(it);
    }
}

void FlowExtractor::add(const PacketView& pkt) {
    ++packets_;
    if (pkt.transport == Transport::Other || pkt.ip_version == 0) {
        ++ignored_;
        return;
    }
    if (!swept_once_ || pkt.ts_ns - last_sweep_ >= kSweepInterval) {
        if (swept_once_) sweep(pkt.ts_ns);
        last_sweep_ = pkt.ts_ns;
        swept_once_ = true;
    }
    auto dk = flow_key(pkt);
    auto it = table_.find(dk.key);
    if (it != table_.end() && pkt.ts_ns - it->second.record.telemetry.last_ns > config_.idle_timeout) {
        finalize(it->second);
        table_.erase(it);
        it = table_.end();
    }
    if (it == table_.end()) it = table_.emplace(dk.key, Entry{start_flow(pkt), std::nullopt}).first;
    Entry& e = it->second;
    update_flow(e.record, pkt);
    if (e.record.chlo_state == ChloState::Pending && is_from_client(e.record, pkt) && !pkt.payload.empty()) {
        auto f = try_parse_handshake(e.record, config_, false);
        if (f) e.fields = std::move(f);
    }
}

void FlowExtractor::finish() {
    std::vector<FlowKey> keys;
    keys.reserve(table_.size());
    for (const auto& [k, e] : table_) keys.push_back(k);
    std::sort(keys.begin(), keys.end(), [&](const FlowKey& a, const FlowKey& b) {
        const auto& ta = table_.at(a).record.telemetry;
        const auto& tb = table_.at(b).record.telemetry;
        return std::tie(ta.first_ns, a) < std::tie(tb.first_ns, b);
    });
    for (const auto& k : keys) finalize(table_.at(k));
    table_.clear();
}

std::vector<ExtractedFlow> extract_pcap(const std::string& path, const ExtractConfig& config) {
    std::vector<ExtractedFlow> out;
    FlowExtractor ex(config, [&](ExtractedFlow&& f) { out.push_back(std::move(f)); });
    PcapReader reader(path);
    PcapRecord rec;
    while (reader.next(rec)) {
        ex.add(decode_packet(rec.data, reader.link_type(), rec.ts_ns));
    }
    ex.finish();
    return out;
}

json fields_to_json(const HandshakeFieldSet& fields, const AttributeRegistry& registry) {
    Layout layout(registry, fields.protocol);
    json out = json::object();
    for (const auto* spec : layout.specs()) out[spec->label] = to_json(field_value(fields, *spec), spec->type);
    return out;
}

json flow_to_json(const ExtractedFlow& flow, const AttributeVector* vector) {
    const auto& r = flow.record;
    json j = {{"client", r.client_addr.to_string()},
              {"server", r.server_addr.to_string()},
              {"client_port", r.client_port},
              {"server_port", r.server_port},
              {"protocol", to_string(r.protocol)},
              {"provider", to_string(r.provider)},
              {"role", to_string(r.role)},
              {"sni", r.sni},
              {"chlo", to_string(r.chlo_state)},
              {"telemetry", telemetry_json(r.telemetry)}};
    if (!r.chlo_error.empty()) j["chlo_error"] = r.chlo_error;
    j["fields"] = flow.fields ? fields_to_json(*flow.fields, AttributeRegistry::defaults()) : json(nullptr);
    if (vector) j["vector"] = vector->values;
    return j;
}

}  // namespace vidfp
