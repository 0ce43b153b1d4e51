#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "vidfp/bytes.hpp"
#include "vidfp/pcap.hpp"

namespace vidfp {

struct IpAddress {
    std::uint8_t version = 0;  // 4 or 6; 0 when unset
    std::array<std::uint8_t, 16> bytes{};

    static IpAddress v4(std::uint32_t host_order);
    /// Parses dotted-quad or RFC 4291 text; throws std::invalid_argument.
    static IpAddress parse(std::string_view text);
    std::string to_string() const;
    std::size_t size() const noexcept { return version == 6 ? 16 : 4; }

    auto operator<=>(const IpAddress&) const = default;
};

enum class Transport : std::uint8_t { Other = 0, TCP = 6, UDP = 17 };

namespace tcp_flag {
constexpr std::uint8_t FIN = 0x01;
constexpr std::uint8_t SYN = 0x02;
constexpr std::uint8_t RST = 0x04;
constexpr std::uint8_t PSH = 0x08;
constexpr std::uint8_t ACK = 0x10;
constexpr std::uint8_t URG = 0x20;
constexpr std::uint8_t ECE = 0x40;
constexpr std::uint8_t CWR = 0x80;
}  // namespace tcp_flag

/// Decoded view of one captured frame. `payload` points into the frame
/// buffer handed to decode_packet and shares its lifetime.
struct PacketView {
    TimestampNs ts_ns = 0;
    LinkType link_type = LinkType::Ethernet;
    std::uint8_t ip_version = 0;
    std::optional<std::uint8_t> ttl;
    IpAddress src;
    IpAddress dst;
    Transport transport = Transport::Other;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::optional<std::uint8_t> tcp_flags;
    std::uint32_t tcp_seq = 0;
    std::uint32_t tcp_ack = 0;
    std::uint16_t tcp_window = 0;
    Bytes tcp_options;
    ByteSpan payload;
    std::uint32_t total_ip_length = 0;
};

/// Never throws: layers that fail to parse leave their fields empty.
PacketView decode_packet(ByteSpan raw, LinkType link, TimestampNs ts_ns = 0);

// Frame builders for synthetic traffic and tests. All produce Ethernet II
// frames with fixed MAC addresses and valid IPv4 header checksums.
struct TcpSegmentSpec {
    IpAddress src, dst;
    std::uint16_t src_port = 0, dst_port = 0;
    std::uint8_t ttl = 64;
    std::uint8_t flags = 0;
    std::uint32_t seq = 0, ack = 0;
    std::uint16_t window = 0;
    Bytes options;  // padded to a multiple of 4 with NOP
    ByteSpan payload;
    /// When nonzero, the IP total-length field claims this many bytes while
    /// only headers plus `payload` are materialized (snaplen-style frames).
    std::uint32_t claimed_payload_len = 0;
};

struct UdpDatagramSpec {
    IpAddress src, dst;
    std::uint16_t src_port = 0, dst_port = 0;
    std::uint8_t ttl = 64;
    ByteSpan payload;
    std::uint32_t claimed_payload_len = 0;
};

Bytes build_tcp_frame(const TcpSegmentSpec& spec);
Bytes build_udp_frame(const UdpDatagramSpec& spec);

constexpr std::size_t kEthernetHeaderLen = 14;
constexpr std::size_t kIpv4HeaderLen = 20;
constexpr std::size_t kIpv6HeaderLen = 40;
constexpr std::size_t kUdpHeaderLen = 8;

}  // namespace vidfp
