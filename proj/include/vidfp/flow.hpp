#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vidfp/bytes.hpp"
#include "vidfp/packet.hpp"
#include "vidfp/provider.hpp"

namespace vidfp {

/// Canonical 5-tuple: the lower (address, port) endpoint is stored first, so
/// both directions of a connection map to the same key.
struct FlowKey {
    IpAddress addr_a, addr_b;
    std::uint16_t port_a = 0, port_b = 0;
    Transport proto = Transport::Other;

    bool operator==(const FlowKey&) const = default;
    auto operator<=>(const FlowKey&) const = default;
};

struct FlowKeyHash {
    std::size_t operator()(const FlowKey& k) const noexcept;
};

struct DirectedKey {
    FlowKey key;
    bool from_a = true;  // packet source is endpoint A
};

DirectedKey flow_key(const IpAddress& src, std::uint16_t sport, const IpAddress& dst,
                     std::uint16_t dport, Transport proto);
DirectedKey flow_key(const PacketView& pkt);

/// Per-flow counters plus downstream bytes per one-second bin. Only non-empty
/// bins are stored, in ascending order.
struct FlowTelemetry {
    TimestampNs first_ns = 0;
    TimestampNs last_ns = 0;
    std::uint64_t up_bytes = 0;
    std::uint64_t down_bytes = 0;
    std::uint64_t up_packets = 0;
    std::uint64_t down_packets = 0;
    std::vector<std::pair<std::int64_t, std::uint64_t>> down_bins;

    double duration_s() const { return static_cast<double>(last_ns - first_ns) / kNsPerSec; }
    std::size_t active_bins() const { return down_bins.size(); }
    /// Mean over active (non-empty) 1 s bins, in Mbit/s.
    double mean_down_mbps() const;
    double peak_down_mbps() const;

    void add_down_bytes(TimestampNs ts, std::uint64_t bytes);
};

enum class Protocol { TCP, QUIC };
std::string_view to_string(Protocol p);
Protocol parse_protocol(std::string_view s);

enum class ChloState { Pending, Parsed, Unavailable };
std::string_view to_string(ChloState s);

constexpr std::size_t kHandshakeBufferCap = 16 * 1024;
constexpr std::size_t kMaxQuicInitials = 3;
constexpr TimestampNs kFlowIdleTimeout = 120 * kNsPerSec;

struct FlowRecord {
    FlowKey key;
    IpAddress client_addr, server_addr;
    std::uint16_t client_port = 0, server_port = 0;
    Provider provider = Provider::None;
    Role role = Role::Unknown;
    Protocol protocol = Protocol::TCP;
    ChloState chlo_state = ChloState::Pending;
    std::string chlo_error;  // reason when Unavailable
    std::string sni;

    /// First client packet with its payload span cleared; source of ttl and
    /// initial packet size, and of the SYN fields for TCP.
    std::optional<PacketView> first_client_packet;

    /// Client-to-server TCP stream bytes in sequence order, from offset 0.
    Bytes handshake_buffer;
    std::uint32_t next_client_seq = 0;
    bool client_seq_known = false;
    bool buffer_capped = false;

    /// Raw client UDP payloads that may be QUIC Initials (at most three).
    std::vector<Bytes> quic_initials;

    FlowTelemetry telemetry;
};

/// Creates a record for the flow `pkt` starts; the sender becomes the client.
FlowRecord start_flow(const PacketView& pkt);

bool is_from_client(const FlowRecord& record, const PacketView& pkt);

/// Updates telemetry and, while the ClientHello is still pending, appends
/// client bytes to the handshake buffers. A TCP sequence gap before the
/// ClientHello completes marks the flow Unavailable.
void update_flow(FlowRecord& record, const PacketView& pkt);

}  // namespace vidfp
