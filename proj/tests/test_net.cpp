#include <cstdio>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "rfc9001_vectors.hpp"
#include "vidfp/error.hpp"
#include "vidfp/extract.hpp"
#include "vidfp/flow.hpp"
#include "vidfp/packet.hpp"
#include "vidfp/pcap.hpp"
#include "vidfp/provider.hpp"
#include "vidfp/quic.hpp"

using namespace vidfp;
using testutil::TempDir;
using testutil::hex;

namespace {

std::string error_code(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.qualified_code();
    }
    return "";
}

void write_raw(const std::string& path, const Bytes& b) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Classic pcap global header written by hand, independent of PcapWriter.
Bytes pcap_header(std::uint32_t magic, bool big_endian) {
    ByteWriter w;
    auto put32 = [&](std::uint32_t v) {
        if (big_endian) {
            w.u32(v);
        } else {
            for (int i = 0; i < 4; ++i) w.u8(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    };
    auto put16 = [&](std::uint16_t v) {
        if (big_endian) {
            w.u16(v);
        } else {
            w.u8(static_cast<std::uint8_t>(v));
            w.u8(static_cast<std::uint8_t>(v >> 8));
        }
    };
    put32(magic);
    put16(2);
    put16(4);
    put32(0);
    put32(0);
    put32(65535);
    put32(101);
    auto rec = [&](std::uint32_t sec, std::uint32_t frac, std::uint32_t len) {
        put32(sec);
        put32(frac);
        put32(len);
        put32(len);
        w.zeros(len);
    };
    rec(10, 500, 20);
    return w.take();
}

IpAddress ip(const char* s) { return IpAddress::parse(s); }

PacketView decoded(const Bytes& frame, TimestampNs ts) { return decode_packet(frame, LinkType::Ethernet, ts); }

}  // namespace

TEST_CASE("pcap: header-only capture yields no records") {
    TempDir dir;
    { PcapWriter w(dir.file("e.pcap"), LinkType::Ethernet); }
    PcapReader r(dir.file("e.pcap"));
    PcapRecord rec;
    CHECK_FALSE(r.next(rec));
}

TEST_CASE("pcap: bad magic") {
    TempDir dir;
    write_raw(dir.file("bad.pcap"), hex("deadbeef000000000000000000000000000000000000000000000000"));
    CHECK(error_code([&] { PcapReader r(dir.file("bad.pcap")); }) == "pcap.BadMagic");
}

TEST_CASE("pcap: microsecond and nanosecond magics in both byte orders") {
    TempDir dir;
    struct Case {
        std::uint32_t magic;
        bool big;
        TimestampNs expect;
    };
    for (const auto& c : {Case{0xa1b2c3d4, false, 10'000'500'000}, Case{0xa1b2c3d4, true, 10'000'500'000},
                          Case{0xa1b23c4d, false, 10'000'000'500}, Case{0xa1b23c4d, true, 10'000'000'500}}) {
        write_raw(dir.file("x.pcap"), pcap_header(c.magic, c.big));
        PcapReader r(dir.file("x.pcap"));
        PcapRecord rec;
        REQUIRE(r.next(rec));
        CHECK(rec.ts_ns == c.expect);
        CHECK(rec.data.size() == 20);
        CHECK(r.link_type() == LinkType::RawIP);
        CHECK_FALSE(r.next(rec));
    }
}

TEST_CASE("pcap: truncated record") {
    TempDir dir;
    Bytes b = pcap_header(0xa1b2c3d4, false);
    b.resize(b.size() - 5);
    write_raw(dir.file("t.pcap"), b);
    PcapReader r(dir.file("t.pcap"));
    PcapRecord rec;
    CHECK(error_code([&] { r.next(rec); }) == "pcap.TruncatedRecord");
}

TEST_CASE("pcap: writer round trip keeps count and ordering") {
    TempDir dir;
    std::vector<Bytes> frames;
    {
        PcapWriter w(dir.file("w.pcap"), LinkType::Ethernet, true);
        for (int i = 0; i < 50; ++i) {
            Bytes payload(static_cast<std::size_t>(i), 0xab);
            UdpDatagramSpec s{ip("10.0.0.1"), ip("10.0.0.2"), 5000, 443, 64, payload};
            frames.push_back(build_udp_frame(s));
            w.write(1000 + i * 7, frames.back());
        }
    }
    PcapReader r(dir.file("w.pcap"));
    PcapRecord rec;
    int n = 0;
    TimestampNs last = 0;
    while (r.next(rec)) {
        CHECK(rec.ts_ns >= last);
        last = rec.ts_ns;
        CHECK(Bytes(rec.data.begin(), rec.data.end()) == frames[n]);
        ++n;
    }
    CHECK(n == 50);
}

TEST_CASE("packet: hand-built IPv4 TCP SYN") {
    // Ethernet, IPv4 (TTL 0x40), TCP SYN 1234 -> 443, no options.
    Bytes frame = hex(
        "000000000002" "000000000001" "0800"
        "45000028" "00004000" "4006" "0000" "0a000001" "0a000002"
        "04d201bb" "00000001" "00000000" "5002" "faf0" "0000" "0000");
    auto p = decode_packet(frame, LinkType::Ethernet, 7);
    CHECK(p.ip_version == 4);
    CHECK(p.transport == Transport::TCP);
    REQUIRE(p.tcp_flags);
    CHECK(*p.tcp_flags == tcp_flag::SYN);
    REQUIRE(p.ttl);
    CHECK(*p.ttl == 64);
    CHECK(p.src_port == 1234);
    CHECK(p.dst_port == 443);
    CHECK(p.tcp_window == 0xfaf0);
    CHECK(p.total_ip_length == 40);
    CHECK(p.src.to_string() == "10.0.0.1");
    CHECK(p.payload.empty());
}

TEST_CASE("packet: UDP datagram carrying the published client Initial") {
    Bytes initial = hex(kRfcProtectedPacket);
    UdpDatagramSpec s{ip("192.0.2.1"), ip("198.51.100.2"), 50000, 443, 57, initial};
    auto p = decoded(build_udp_frame(s), 0);
    CHECK(p.transport == Transport::UDP);
    CHECK(p.dst_port == 443);
    CHECK(p.payload.size() == initial.size());
    CHECK(is_quic_initial(p.payload));
    CHECK(p.total_ip_length == 20 + 8 + initial.size());
}

TEST_CASE("packet: truncated frames never throw") {
    std::mt19937_64 rng(5);
    Bytes payload(40, 1);
    TcpSegmentSpec s{ip("10.0.0.1"), ip("10.0.0.2"), 1, 2, 64, tcp_flag::ACK, 1, 1, 100, {}, payload};
    Bytes frame = build_tcp_frame(s);
    for (std::size_t n = 0; n <= frame.size(); ++n) {
        Bytes cut(frame.begin(), frame.begin() + static_cast<std::ptrdiff_t>(n));
        CHECK_NOTHROW(decode_packet(cut, LinkType::Ethernet));
    }
    for (int i = 0; i < 500; ++i) {
        Bytes junk(rng() % 80);
        for (auto& b : junk) b = static_cast<std::uint8_t>(rng());
        CHECK_NOTHROW(decode_packet(junk, LinkType::Ethernet));
        CHECK_NOTHROW(decode_packet(junk, LinkType::RawIP));
    }
}

TEST_CASE("packet: IPv6 addresses parse and print") {
    auto a = ip("2001:db8::1");
    CHECK(a.version == 6);
    CHECK(a.to_string() == "2001:db8::1");
    CHECK(ip("10.1.2.3").to_string() == "10.1.2.3");
}

TEST_CASE("flow: key symmetry") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        auto a = IpAddress::v4(static_cast<std::uint32_t>(rng()));
        auto b = IpAddress::v4(static_cast<std::uint32_t>(rng()));
        auto pa = static_cast<std::uint16_t>(rng());
        auto pb = static_cast<std::uint16_t>(rng());
        auto t = (rng() & 1) ? Transport::TCP : Transport::UDP;
        auto k1 = flow_key(a, pa, b, pb, t);
        auto k2 = flow_key(b, pb, a, pa, t);
        CHECK(k1.key == k2.key);
        CHECK(FlowKeyHash{}(k1.key) == FlowKeyHash{}(k2.key));
        if (!(a == b && pa == pb)) CHECK(k1.from_a != k2.from_a);
    }
}

TEST_CASE("flow: durations and byte counters") {
    Bytes up_payload(100, 1), down_payload(1000, 2);
    TcpSegmentSpec up{ip("10.0.0.1"), ip("10.0.0.2"), 40000, 443, 64, tcp_flag::SYN, 0, 0, 1000, {}, {}};
    auto f1 = build_tcp_frame(up);
    auto p1 = decoded(f1, 1 * kNsPerSec);
    auto rec = start_flow(p1);
    update_flow(rec, p1);
    CHECK(rec.telemetry.duration_s() == 0.0);
    CHECK(rec.telemetry.up_bytes == p1.total_ip_length);
    CHECK(rec.telemetry.down_bytes == 0);

    TcpSegmentSpec down{ip("10.0.0.2"), ip("10.0.0.1"), 443, 40000, 60, tcp_flag::ACK, 0, 1, 1000, {}, down_payload};
    auto f2 = build_tcp_frame(down);
    auto p2 = decoded(f2, 6 * kNsPerSec);
    CHECK_FALSE(is_from_client(rec, p2));
    update_flow(rec, p2);
    CHECK(rec.telemetry.duration_s() == 5.0);
    CHECK(rec.telemetry.up_bytes + rec.telemetry.down_bytes == p1.total_ip_length + p2.total_ip_length);
    CHECK(rec.client_port == 40000);
    CHECK(rec.server_port == 443);
}

TEST_CASE("flow: one minute of 6 MB downstream is 0.8 Mbps") {
    // 60 one-second bins, 100 kB per bin. IP length claimed, payload not materialized.
    const std::uint32_t per_packet = 10'000;
    TcpSegmentSpec syn{ip("10.0.0.1"), ip("10.0.0.2"), 40000, 443, 64, tcp_flag::SYN, 0, 0, 1000, {}, {}};
    auto fs = build_tcp_frame(syn);
    auto ps = decoded(fs, 0);
    auto rec = start_flow(ps);
    update_flow(rec, ps);
    std::uint64_t sum_up = ps.total_ip_length, sum_down = 0;
    for (int s = 0; s < 60; ++s) {
        for (int k = 0; k < 10; ++k) {
            TcpSegmentSpec d{ip("10.0.0.2"), ip("10.0.0.1"), 443, 40000, 64, tcp_flag::ACK, 0, 0, 0, {}, {}, 0};
            d.claimed_payload_len = per_packet - 40;
            auto f = build_tcp_frame(d);
            auto p = decoded(f, s * kNsPerSec + k * 1000 + 1);
            CHECK(p.total_ip_length == per_packet);
            update_flow(rec, p);
            sum_down += p.total_ip_length;
        }
    }
    CHECK(rec.telemetry.down_bytes == 6'000'000);
    CHECK(rec.telemetry.active_bins() == 60);
    CHECK(rec.telemetry.mean_down_mbps() == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(rec.telemetry.peak_down_mbps() == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(rec.telemetry.up_bytes + rec.telemetry.down_bytes == sum_up + sum_down);
}

TEST_CASE("flow: TCP handshake buffer only takes in-order client bytes") {
    Bytes a = hex("160301"), b = hex("0005aabbccddee");
    TcpSegmentSpec syn{ip("10.0.0.1"), ip("10.0.0.2"), 40000, 443, 64, tcp_flag::SYN, 99, 0, 1000, {}, {}};
    auto fsyn = build_tcp_frame(syn);
    auto rec = start_flow(decoded(fsyn, 0));
    update_flow(rec, decoded(fsyn, 0));
    TcpSegmentSpec s1{ip("10.0.0.1"), ip("10.0.0.2"), 40000, 443, 64, tcp_flag::ACK, 100, 1, 1000, {}, a};
    TcpSegmentSpec s2{ip("10.0.0.1"), ip("10.0.0.2"), 40000, 443, 64, tcp_flag::ACK, 103, 1, 1000, {}, b};
    auto f1 = build_tcp_frame(s1), f2 = build_tcp_frame(s2);
    update_flow(rec, decoded(f1, 1));
    update_flow(rec, decoded(f1, 2));  // retransmission
    update_flow(rec, decoded(f2, 3));
    Bytes expect = a;
    expect.insert(expect.end(), b.begin(), b.end());
    CHECK(rec.handshake_buffer == expect);
}

TEST_CASE("provider: default table") {
    auto t = ProviderTable::defaults();
    CHECK(t.detect("www.youtube.com", 443) == std::pair{Provider::YT, Role::Management});
    CHECK(t.detect("rr4---sn-abc.googlevideo.com", 443) == std::pair{Provider::YT, Role::Content});
    CHECK(t.detect("example.com", 443) == std::pair{Provider::None, Role::Unknown});
    CHECK(t.detect("notyoutube.com", 443).first == Provider::None);
    CHECK(t.detect("WWW.NETFLIX.COM", 443).first == Provider::NF);
    CHECK(t.detect("www.primevideo.com", 443).first == Provider::AP);
    CHECK(t.detect("www.disneyplus.com", 443).first == Provider::DN);
}

TEST_CASE("provider: longest suffix wins and ports restrict") {
    auto t = ProviderTable::from_json(R"([
        {"pattern": "example.com", "provider": "NF", "role": "management"},
        {"pattern": "cdn.example.com", "provider": "DN", "role": "content", "port": 8443}])");
    CHECK(t.detect("a.cdn.example.com", 8443) == std::pair{Provider::DN, Role::Content});
    CHECK(t.detect("a.cdn.example.com", 443) == std::pair{Provider::NF, Role::Management});
    CHECK(error_code([] { ProviderTable::from_json(R"([{"pattern": "x.com", "provider": "ZZ"}])"); }) ==
          "provider.BadConfig");
}

TEST_CASE("extract: empty pcap gives no flows") {
    TempDir dir;
    { PcapWriter w(dir.file("e.pcap"), LinkType::Ethernet); }
    CHECK(extract_pcap(dir.file("e.pcap")).empty());
}
