#include "vidfp/flow.hpp"

#include <algorithm>

#include "vidfp/error.hpp"

namespace vidfp {

std::size_t FlowKeyHash::operator()(const FlowKey& k) const noexcept {
    // FNV-1a over the canonical tuple.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint8_t b) {
        h ^= b;
        h *= 1099511628211ull;
    };
    for (std::size_t i = 0; i < k.addr_a.size(); ++i) mix(k.addr_a.bytes[i]);
    for (std::size_t i = 0; i < k.addr_b.size(); ++i) mix(k.addr_b.bytes[i]);
    mix(static_cast<std::uint8_t>(k.port_a >> 8));
    mix(static_cast<std::uint8_t>(k.port_a));
    mix(static_cast<std::uint8_t>(k.port_b >> 8));
    mix(static_cast<std::uint8_t>(k.port_b));
    mix(static_cast<std::uint8_t>(k.proto));
    return static_cast<std::size_t>(h);
}

DirectedKey flow_key(const IpAddress& src, std::uint16_t sport, const IpAddress& dst,
                     std::uint16_t dport, Transport proto) {
    DirectedKey d;
    d.key.proto = proto;
    bool src_first = std::tie(src, sport) <= std::tie(dst, dport);
    if (src_first) {
        d.key.addr_a = src;
        d.key.port_a = sport;
        d.key.addr_b = dst;
        d.key.port_b = dport;
    } else {
        d.key.addr_a = dst;
        d.key.port_a = dport;
        d.key.addr_b = src;
        d.key.port_b = sport;
    }
    d.from_a = src_first;
    return d;
}

DirectedKey flow_key(const PacketView& pkt) {
    return flow_key(pkt.src, pkt.src_port, pkt.dst, pkt.dst_port, pkt.transport);
}

double FlowTelemetry::mean_down_mbps() const {
    if (down_bins.empty()) return 0.0;
    return static_cast<double>(down_bytes) * 8.0 / static_cast<double>(down_bins.size()) / 1e6;
}

double FlowTelemetry::peak_down_mbps() const {
    std::uint64_t peak = 0;
    for (const auto& [sec, bytes] : down_bins) peak = std::max(peak, bytes);
    return static_cast<double>(peak) * 8.0 / 1e6;
}

void FlowTelemetry::add_down_bytes(TimestampNs ts, std::uint64_t bytes) {
    std::int64_t sec = ts >= 0 ? ts / kNsPerSec : -((-ts + kNsPerSec - 1) / kNsPerSec);
    if (down_bins.empty() || down_bins.back().first < sec) {
        down_bins.emplace_back(sec, bytes);
        return;
    }
    auto it = std::lower_bound(down_bins.begin(), down_bins.end(), sec,
                               [](const auto& bin, std::int64_t s) { return bin.first < s; });
    if (it != down_bins.end() && it->first == sec) {
        it->second += bytes;
    } else {
        down_bins.insert(it, {sec, bytes});
    }
}

std::string_view to_string(Protocol p) { return p == Protocol::TCP ? "TCP" : "QUIC"; }

Protocol parse_protocol(std::string_view s) {
    if (s == "TCP" || s == "tcp") return Protocol::TCP;
    if (s == "QUIC" || s == "quic") return Protocol::QUIC;
    throw Error("flow", "BadProtocol", "unknown protocol '" + std::string(s) + "'");
}

std::string_view to_string(ChloState s) {
    switch (s) {
        case ChloState::Parsed: return "parsed";
        case ChloState::Unavailable: return "unavailable";
        case ChloState::Pending: break;
    }
    return "pending";
}

FlowRecord start_flow(const PacketView& pkt) {
    FlowRecord r;
    r.key = flow_key(pkt).key;
    r.client_addr = pkt.src;
    r.client_port = pkt.src_port;
    r.server_addr = pkt.dst;
    r.server_port = pkt.dst_port;
    // A SYN-ACK seen first means we joined after the client's SYN.
    if (pkt.transport == Transport::TCP && pkt.tcp_flags &&
        (*pkt.tcp_flags & (tcp_flag::SYN | tcp_flag::ACK)) == (tcp_flag::SYN | tcp_flag::ACK)) {
        std::swap(r.client_addr, r.server_addr);
        std::swap(r.client_port, r.server_port);
    }
    r.protocol = pkt.transport == Transport::UDP ? Protocol::QUIC : Protocol::TCP;
    r.telemetry.first_ns = r.telemetry.last_ns = pkt.ts_ns;
    return r;
}

bool is_from_client(const FlowRecord& record, const PacketView& pkt) {
    return pkt.src == record.client_addr && pkt.src_port == record.client_port;
}

namespace {

void append_tcp_stream(FlowRecord& r, const PacketView& pkt) {
    const bool syn = pkt.tcp_flags && (*pkt.tcp_flags & tcp_flag::SYN);
    if (syn) {
        r.next_client_seq = pkt.tcp_seq + 1;
        r.client_seq_known = true;
    }
    if (pkt.payload.empty()) return;
    if (!r.client_seq_known) {
        // Joined mid-connection: the first data segment defines offset 0.
        r.next_client_seq = pkt.tcp_seq;
        r.client_seq_known = true;
    }
    std::uint32_t seq = syn ? pkt.tcp_seq + 1 : pkt.tcp_seq;
    auto delta = static_cast<std::int32_t>(seq - r.next_client_seq);
    if (delta > 0) {
        r.chlo_state = ChloState::Unavailable;
        r.chlo_error = "tcp.Gap";
        r.handshake_buffer.clear();
        return;
    }
    auto skip = static_cast<std::size_t>(-static_cast<std::int64_t>(delta));
    if (skip >= pkt.payload.size()) return;  // pure retransmission
    auto fresh = pkt.payload.subspan(skip);
    std::size_t room = kHandshakeBufferCap - r.handshake_buffer.size();
    if (fresh.size() > room) {
        fresh = fresh.first(room);
        r.buffer_capped = true;
    }
    r.handshake_buffer.insert(r.handshake_buffer.end(), fresh.begin(), fresh.end());
    r.next_client_seq += static_cast<std::uint32_t>(skip + fresh.size());
}

void append_quic_datagram(FlowRecord& r, const PacketView& pkt) {
    if (pkt.payload.empty()) return;
    if (r.quic_initials.size() >= kMaxQuicInitials) return;
    std::size_t held = 0;
    for (const auto& d : r.quic_initials) held += d.size();
    if (held + pkt.payload.size() > kHandshakeBufferCap) {
        r.buffer_capped = true;
        return;
    }
    r.quic_initials.emplace_back(pkt.payload.begin(), pkt.payload.end());
}

}  // namespace

void update_flow(FlowRecord& record, const PacketView& pkt) {
    auto& t = record.telemetry;
    t.first_ns = std::min(t.first_ns, pkt.ts_ns);
    t.last_ns = std::max(t.last_ns, pkt.ts_ns);
    const bool up = is_from_client(record, pkt);
    if (up) {
        t.up_bytes += pkt.total_ip_length;
        ++t.up_packets;
        if (!record.first_client_packet) {
            PacketView copy = pkt;
            copy.payload = {};
            record.first_client_packet = std::move(copy);
        }
    } else {
        t.down_bytes += pkt.total_ip_length;
        ++t.down_packets;
        t.add_down_bytes(pkt.ts_ns, pkt.total_ip_length);
    }
    if (!up || record.chlo_state != ChloState::Pending || record.buffer_capped) return;
    if (pkt.transport == Transport::TCP) {
        append_tcp_stream(record, pkt);
    } else if (pkt.transport == Transport::UDP) {
        append_quic_datagram(record, pkt);
    }
}

}  // namespace vidfp
