#include "vidfp/packet.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <stdexcept>

namespace vidfp {

IpAddress IpAddress::v4(std::uint32_t host_order) {
    IpAddress a;
    a.version = 4;
    a.bytes[0] = static_cast<std::uint8_t>(host_order >> 24);
    a.bytes[1] = static_cast<std::uint8_t>(host_order >> 16);
    a.bytes[2] = static_cast<std::uint8_t>(host_order >> 8);
    a.bytes[3] = static_cast<std::uint8_t>(host_order);
    return a;
}

IpAddress IpAddress::parse(std::string_view text) {
    std::string s(text);
    IpAddress a;
    if (s.find(':') != std::string::npos) {
        if (inet_pton(AF_INET6, s.c_str(), a.bytes.data()) != 1)
            throw std::invalid_argument("bad IPv6 address: " + s);
        a.version = 6;
    } else {
        if (inet_pton(AF_INET, s.c_str(), a.bytes.data()) != 1)
            throw std::invalid_argument("bad IPv4 address: " + s);
        a.version = 4;
    }
    return a;
}

std::string IpAddress::to_string() const {
    char buf[INET6_ADDRSTRLEN] = {};
    if (version == 6) {
        inet_ntop(AF_INET6, bytes.data(), buf, sizeof buf);
    } else if (version == 4) {
        inet_ntop(AF_INET, bytes.data(), buf, sizeof buf);
    } else {
        return "";
    }
    return buf;
}

namespace {

constexpr std::uint16_t kEtherIpv4 = 0x0800;
constexpr std::uint16_t kEtherIpv6 = 0x86dd;
constexpr std::uint16_t kEtherVlan = 0x8100;
constexpr std::uint16_t kEtherQinQ = 0x88a8;

void decode_transport(PacketView& v, std::uint8_t proto, ByteSpan seg) {
    if (proto == 6) {
        if (seg.size() < 20) return;
        std::size_t off = static_cast<std::size_t>(seg[12] >> 4) * 4;
        if (off < 20 || off > seg.size()) return;
        v.transport = Transport::TCP;
        v.src_port = load_be16(&seg[0]);
        v.dst_port = load_be16(&seg[2]);
        v.tcp_seq = load_be32(&seg[4]);
        v.tcp_ack = load_be32(&seg[8]);
        v.tcp_flags = seg[13];
        v.tcp_window = load_be16(&seg[14]);
        v.tcp_options.assign(seg.begin() + 20, seg.begin() + static_cast<std::ptrdiff_t>(off));
        v.payload = seg.subspan(off);
    } else if (proto == 17) {
        if (seg.size() < kUdpHeaderLen) return;
        v.transport = Transport::UDP;
        v.src_port = load_be16(&seg[0]);
        v.dst_port = load_be16(&seg[2]);
        std::size_t ulen = load_be16(&seg[4]);
        std::size_t end = seg.size();
        if (ulen >= kUdpHeaderLen && ulen < end) end = ulen;
        v.payload = seg.subspan(kUdpHeaderLen, end - kUdpHeaderLen);
    }
}

void decode_ipv4(PacketView& v, ByteSpan ip) {
    if (ip.size() < kIpv4HeaderLen || (ip[0] >> 4) != 4) return;
    std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
    if (ihl < kIpv4HeaderLen || ihl > ip.size()) return;
    std::size_t total = load_be16(&ip[2]);
    v.ip_version = 4;
    v.ttl = ip[8];
    v.total_ip_length = static_cast<std::uint32_t>(total);
    v.src.version = v.dst.version = 4;
    std::copy_n(&ip[12], 4, v.src.bytes.begin());
    std::copy_n(&ip[16], 4, v.dst.bytes.begin());
    std::uint16_t frag = load_be16(&ip[6]);
    if ((frag & 0x1fff) != 0) return;  // non-first fragment carries no transport header
    std::size_t end = std::min(ip.size(), std::max(total, ihl));
    decode_transport(v, ip[9], ip.subspan(ihl, end - ihl));
}

void decode_ipv6(PacketView& v, ByteSpan ip) {
    if (ip.size() < kIpv6HeaderLen || (ip[0] >> 4) != 6) return;
    std::size_t payload_len = load_be16(&ip[4]);
    v.ip_version = 6;
    v.ttl = ip[7];
    v.total_ip_length = static_cast<std::uint32_t>(payload_len + kIpv6HeaderLen);
    v.src.version = v.dst.version = 6;
    std::copy_n(&ip[8], 16, v.src.bytes.begin());
    std::copy_n(&ip[24], 16, v.dst.bytes.begin());
    std::uint8_t next = ip[6];
    std::size_t off = kIpv6HeaderLen;
    std::size_t end = std::min(ip.size(), payload_len + kIpv6HeaderLen);
    // IPv6 extension headers we step over.
    for (int guard = 0; guard < 8; ++guard) {
        if (next == 0 || next == 43 || next == 60) {
            if (off + 2 > end) return;
            std::uint8_t nh = ip[off];
            std::size_t len = (static_cast<std::size_t>(ip[off + 1]) + 1) * 8;
            next = nh;
            off += len;
        } else if (next == 44) {
            if (off + 8 > end) return;
            std::uint16_t frag = load_be16(&ip[off + 2]);
            next = ip[off];
            off += 8;
            if ((frag & 0xfff8) != 0) return;
        } else {
            break;
        }
    }
    if (off > end) return;
    decode_transport(v, next, ip.subspan(off, end - off));
}

}  // namespace

PacketView decode_packet(ByteSpan raw, LinkType link, TimestampNs ts_ns) {
    PacketView v;
    v.ts_ns = ts_ns;
    v.link_type = link;
    ByteSpan ip;
    if (link == LinkType::Ethernet) {
        if (raw.size() < kEthernetHeaderLen) return v;
        std::size_t off = 12;
        std::uint16_t ethertype = load_be16(&raw[off]);
        off += 2;
        while ((ethertype == kEtherVlan || ethertype == kEtherQinQ) && raw.size() >= off + 4) {
            ethertype = load_be16(&raw[off + 2]);
            off += 4;
        }
        if (ethertype != kEtherIpv4 && ethertype != kEtherIpv6) return v;
        ip = raw.subspan(off);
    } else {
        ip = raw;
    }
    if (ip.empty()) return v;
    if ((ip[0] >> 4) == 4) {
        decode_ipv4(v, ip);
    } else if ((ip[0] >> 4) == 6) {
        decode_ipv6(v, ip);
    }
    return v;
}

namespace {

std::uint16_t ipv4_checksum(const std::uint8_t* hdr) {
    std::uint32_t sum = 0;
    for (int i = 0; i < 20; i += 2) sum += static_cast<std::uint32_t>((hdr[i] << 8) | hdr[i + 1]);
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return static_cast<std::uint16_t>(~sum);
}

void write_ethernet(ByteWriter& w, std::uint8_t ip_version) {
    const std::uint8_t dst_mac[6] = {0x02, 0x00, 0x00, 0x00, 0x00, 0x02};
    const std::uint8_t src_mac[6] = {0x02, 0x00, 0x00, 0x00, 0x00, 0x01};
    w.bytes(ByteSpan(dst_mac, 6));
    w.bytes(ByteSpan(src_mac, 6));
    w.u16(ip_version == 6 ? kEtherIpv6 : kEtherIpv4);
}

void write_ip(ByteWriter& w, const IpAddress& src, const IpAddress& dst, std::uint8_t ttl,
              std::uint8_t proto, std::size_t l4_len) {
    if (src.version == 6) {
        w.u32(0x60000000);
        w.u16(static_cast<std::uint16_t>(l4_len));
        w.u8(proto);
        w.u8(ttl);
        w.bytes(ByteSpan(src.bytes.data(), 16));
        w.bytes(ByteSpan(dst.bytes.data(), 16));
        return;
    }
    std::size_t start = w.size();
    w.u8(0x45);
    w.u8(0);
    w.u16(static_cast<std::uint16_t>(kIpv4HeaderLen + l4_len));
    w.u16(0);       // identification
    w.u16(0x4000);  // don't fragment
    w.u8(ttl);
    w.u8(proto);
    w.u16(0);
    w.bytes(ByteSpan(src.bytes.data(), 4));
    w.bytes(ByteSpan(dst.bytes.data(), 4));
    auto csum = ipv4_checksum(w.buffer().data() + start);
    w.buffer()[start + 10] = static_cast<std::uint8_t>(csum >> 8);
    w.buffer()[start + 11] = static_cast<std::uint8_t>(csum);
}

}  // namespace

Bytes build_tcp_frame(const TcpSegmentSpec& spec) {
    Bytes options = spec.options;
    while (options.size() % 4 != 0) options.push_back(1);
    std::size_t tcp_hdr = 20 + options.size();
    std::size_t claimed = std::max<std::size_t>(spec.claimed_payload_len, spec.payload.size());
    ByteWriter w;
    write_ethernet(w, spec.src.version);
    write_ip(w, spec.src, spec.dst, spec.ttl, 6, tcp_hdr + claimed);
    w.u16(spec.src_port);
    w.u16(spec.dst_port);
    w.u32(spec.seq);
    w.u32(spec.ack);
    w.u8(static_cast<std::uint8_t>((tcp_hdr / 4) << 4));
    w.u8(spec.flags);
    w.u16(spec.window);
    w.u16(0);  // checksum left zero
    w.u16(0);
    w.bytes(options);
    w.bytes(spec.payload);
    return w.take();
}

Bytes build_udp_frame(const UdpDatagramSpec& spec) {
    std::size_t claimed = std::max<std::size_t>(spec.claimed_payload_len, spec.payload.size());
    ByteWriter w;
    write_ethernet(w, spec.src.version);
    write_ip(w, spec.src, spec.dst, spec.ttl, 17, kUdpHeaderLen + claimed);
    w.u16(spec.src_port);
    w.u16(spec.dst_port);
    w.u16(static_cast<std::uint16_t>(kUdpHeaderLen + claimed));
    w.u16(0);
    w.bytes(spec.payload);
    return w.take();
}

}  // namespace vidfp
