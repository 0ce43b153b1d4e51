#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "rfc9001_vectors.hpp"
#include "vidfp/error.hpp"
#include "vidfp/packet.hpp"
#include "vidfp/quic.hpp"
#include "vidfp/tls.hpp"

using namespace vidfp;
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

// The ClientHello inside the published CRYPTO frame: type 06, offset 0,
// 2-byte length, then the handshake message.
Bytes rfc_chlo_message() {
    Bytes frame = hex(kRfcCryptoFrame);
    return Bytes(frame.begin() + 4, frame.end());
}

Bytes rfc_chlo_body() {
    Bytes msg = rfc_chlo_message();
    return Bytes(msg.begin() + 4, msg.end());
}

Bytes rfc_plaintext() {
    Bytes p = hex(kRfcCryptoFrame);
    p.resize(kRfcPayloadLength, 0);
    return p;
}

Bytes tls_record(ByteSpan fragment) {
    ByteWriter w;
    w.u8(22);
    w.u16(0x0301);
    w.prefixed(2, fragment);
    return w.take();
}

// Minimal ClientHello body with the given cipher suites and raw extensions block.
Bytes handmade_body(const std::vector<std::uint16_t>& ciphers, const Bytes* extensions) {
    ByteWriter w;
    w.u16(0x0303);
    w.zeros(32);
    w.u8(0);
    w.u16(static_cast<std::uint16_t>(ciphers.size() * 2));
    for (auto c : ciphers) w.u16(c);
    w.u8(1);
    w.u8(0);
    if (extensions) w.prefixed(2, *extensions);
    return w.take();
}

Bytes ext(std::uint16_t type, const Bytes& body) {
    ByteWriter w;
    w.u16(type);
    w.prefixed(2, body);
    return w.take();
}

Bytes cat(std::initializer_list<Bytes> parts) {
    Bytes out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

}  // namespace

TEST_CASE("tls: SYN flag bits and options") {
    Bytes opts = hex("020405b4" "0402" "01" "030308");
    TcpSegmentSpec s{IpAddress::parse("10.0.0.1"), IpAddress::parse("10.0.0.2"), 1, 443, 64, 0b11000010, 0, 0,
                     64240, opts, {}};
    auto f = parse_syn(decode_packet(build_tcp_frame(s), LinkType::Ethernet));
    CHECK(f.cwr);
    CHECK(f.ece);
    CHECK(f.syn);
    CHECK_FALSE(f.urg);
    CHECK_FALSE(f.ack);
    CHECK_FALSE(f.psh);
    CHECK_FALSE(f.rst);
    CHECK_FALSE(f.fin);
    CHECK(f.window_size == 64240);
    CHECK(f.mss == 1460);
    CHECK(f.window_scale == 8);
    CHECK(f.sack_permitted);
    CHECK_FALSE(f.options_malformed);
}

TEST_CASE("tls: published ClientHello decodes field by field") {
    auto ch = parse_client_hello(rfc_chlo_body());
    CHECK(ch.handshake_length == 237);
    CHECK(ch.legacy_version == 0x0303);
    CHECK(ch.cipher_suites == std::vector<std::uint16_t>{0x1301, 0x1302});
    CHECK(ch.server_name == "example.com");
    CHECK(ch.record_size_limit == 16385);
    CHECK(ch.alpn == std::vector<std::string>{"alpn"});
    CHECK(ch.supported_versions == std::vector<std::uint16_t>{0x0304});
    CHECK(ch.key_share_groups == std::vector<std::uint16_t>{0x001d});
    CHECK(ch.supported_groups == std::vector<std::uint16_t>{0x001d, 0x0017, 0x0018});
    CHECK(ch.psk_key_exchange_modes == std::vector<std::uint8_t>{1});
    CHECK(ch.renegotiation_info);
    CHECK(ch.status_request_type == 1);
    CHECK(ch.extension_types ==
          std::vector<std::uint16_t>{0, 0xff01, 10, 16, 5, 51, 43, 13, 45, 28, 57});
    REQUIRE(ch.signature_algorithms);
    CHECK(ch.signature_algorithms->front() == 0x0403);
    CHECK(ch.signature_algorithms->size() == 7);
    REQUIRE(ch.quic_transport_parameters);
    CHECK(ch.quic_transport_parameters->size() == 50);
}

TEST_CASE("tls: record reassembly is independent of record boundaries") {
    Bytes msg = rfc_chlo_message();
    auto whole = extract_chlo(tls_record(msg));
    REQUIRE(whole.status == ChloExtractStatus::Complete);
    CHECK(whole.body == rfc_chlo_body());
    for (std::size_t cut : {1u, 4u, 5u, 100u, 240u}) {
        Bytes a(msg.begin(), msg.begin() + static_cast<std::ptrdiff_t>(cut));
        Bytes b(msg.begin() + static_cast<std::ptrdiff_t>(cut), msg.end());
        auto split = extract_chlo(cat({tls_record(a), tls_record(b)}));
        REQUIRE(split.status == ChloExtractStatus::Complete);
        CHECK(split.body == whole.body);
    }
    Bytes partial = tls_record(msg);
    partial.resize(partial.size() - 10);
    CHECK(extract_chlo(partial).status == ChloExtractStatus::Incomplete);
    CHECK(extract_chlo(hex("170303000501020304")).status == ChloExtractStatus::NotTLS);
}

TEST_CASE("tls: zero extensions and missing extension block") {
    Bytes empty;
    auto with_block = parse_client_hello(handmade_body({0x1301}, &empty));
    CHECK(with_block.has_extensions_block);
    CHECK(with_block.extensions_length == 0);
    CHECK(with_block.extensions.empty());
    CHECK_FALSE(with_block.server_name);
    CHECK_FALSE(with_block.alpn);
    auto without = parse_client_hello(handmade_body({0x1301}, nullptr));
    CHECK_FALSE(without.has_extensions_block);
    CHECK(without.extensions_length == 0);
}

TEST_CASE("tls: GREASE canonicalization keeps order") {
    Bytes groups = hex("0006" "3a3a" "001d" "0017");
    Bytes exts = cat({ext(0xdada, {}), ext(tls_ext::supported_groups, groups), ext(0x1a1a, hex("00"))});
    auto ch = parse_client_hello(handmade_body({0x7a7a, 0x1301, 0xc02b}, &exts));
    CHECK(ch.cipher_suites == std::vector<std::uint16_t>{kGreaseCanonical, 0x1301, 0xc02b});
    CHECK(ch.extension_types == std::vector<std::uint16_t>{kGreaseCanonical, 10, kGreaseCanonical});
    CHECK(ch.supported_groups == std::vector<std::uint16_t>{kGreaseCanonical, 0x1d, 0x17});
    CHECK(ch.extensions.front().type == 0xdada);
    CHECK(is_grease(0xfafa));
    CHECK_FALSE(is_grease(0x0a1a));
    CHECK(canonical_grease(canonical_grease(0x2a2a)) == canonical_grease(0x2a2a));
}

TEST_CASE("tls: compress_certificate names") {
    Bytes body = hex("04" "0002" "0001");
    Bytes exts = ext(tls_ext::compress_certificate, body);
    auto ch = parse_client_hello(handmade_body({0x1301}, &exts));
    CHECK(ch.compress_certificate == std::vector<std::uint16_t>{2, 1});
    CHECK(compress_certificate_name(1) == "zlib");
    CHECK(compress_certificate_name(2) == "brotli");
    CHECK(compress_certificate_name(3) == "zstd");
}

TEST_CASE("tls: malformed lengths report tls.Malformed and never overrun") {
    Bytes body = rfc_chlo_body();
    for (std::size_t n = 0; n < body.size(); ++n) {
        Bytes cut(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(n));
        auto code = error_code([&] { parse_client_hello(cut); });
        // A cut at the end of the fixed part is a legitimate extension-less hello.
        if (!code.empty()) CHECK(code == "tls.Malformed");
    }
    Bytes bad = body;
    bad[34] = 0xff;  // session id length beyond the body
    CHECK(error_code([&] { parse_client_hello(bad); }) == "tls.Malformed");

    std::mt19937_64 rng(3);
    for (int i = 0; i < 3000; ++i) {
        Bytes junk = body;
        for (int k = 0; k < 4; ++k) junk[rng() % junk.size()] = static_cast<std::uint8_t>(rng());
        if (rng() % 3 == 0) junk.resize(rng() % junk.size());
        try {
            parse_client_hello(junk);
        } catch (const Error& e) {
            CHECK(e.qualified_code() == "tls.Malformed");
        }
        try {
            extract_chlo(tls_record(junk));
        } catch (...) {
            FAIL("extract_chlo threw");
        }
    }
}

TEST_CASE("quic: key schedule matches the published vector") {
    Bytes dcid = hex(kRfcDcid);
    auto s = derive_initial_secrets(dcid, kQuicVersion1);
    CHECK(to_hex(s.initial_secret) == kRfcInitialSecret);
    CHECK(to_hex(s.client_secret) == kRfcClientSecret);
    CHECK(to_hex(s.server_secret) == kRfcServerSecret);
    auto c = derive_packet_keys(s.client_secret);
    CHECK(to_hex(c.key) == kRfcClientKey);
    CHECK(to_hex(c.iv) == kRfcClientIv);
    CHECK(to_hex(c.hp) == kRfcClientHp);
    auto sv = derive_packet_keys(s.server_secret);
    CHECK(to_hex(sv.key) == kRfcServerKey);
    CHECK(to_hex(sv.iv) == kRfcServerIv);
    CHECK(to_hex(sv.hp) == kRfcServerHp);
    auto again = derive_initial_keys(dcid, kQuicVersion1);
    CHECK(again.key == c.key);
    CHECK(again.hp == c.hp);
}

TEST_CASE("quic: empty DCID still derives keys; unknown versions are refused") {
    auto k = derive_initial_keys({}, kQuicVersion1);
    CHECK(k.key.size() == 16);
    CHECK(k.iv.size() == 12);
    CHECK(error_code([] { derive_initial_keys(hex("01"), 0xff00001d); }) == "quic.UnknownVersionSalt");
}

TEST_CASE("quic: Initial detection") {
    CHECK(is_quic_initial(hex(kRfcProtectedPacket)));
    CHECK_FALSE(is_quic_initial(hex("40000102")));
    CHECK_FALSE(is_quic_initial({}));
    Bytes other = hex(kRfcProtectedPacket);
    other[4] = 0x02;  // version 2
    CHECK_FALSE(is_quic_initial(other));
    std::vector<std::uint32_t> extra{0x00000002};
    CHECK(is_quic_initial(other, extra));
    Bytes handshake = hex(kRfcProtectedPacket);
    handshake[0] = 0xe0;  // long header, type Handshake
    CHECK_FALSE(is_quic_initial(handshake));
}

TEST_CASE("quic: published client Initial decrypts to the CRYPTO frame") {
    auto keys = derive_initial_keys(hex(kRfcDcid), kQuicVersion1);
    auto pkt = decrypt_initial(hex(kRfcProtectedPacket), keys);
    CHECK(to_hex(pkt.unprotected_header) == kRfcPlainHeader);
    CHECK(pkt.packet_number == 2);
    CHECK(pkt.plaintext == rfc_plaintext());
    CHECK(pkt.header.dcid == hex(kRfcDcid));
    CHECK(pkt.header.scid.empty());
    CHECK(pkt.header.token_length == 0);
    CHECK(pkt.header.udp_payload_size == 1200);
    CHECK(pkt.packet_length == 1200);
}

TEST_CASE("quic: encryption reproduces the published packet") {
    auto keys = derive_initial_keys(hex(kRfcDcid), kQuicVersion1);
    InitialPacketSpec spec;
    spec.dcid = hex(kRfcDcid);
    spec.packet_number = 2;
    spec.pn_length = 4;
    spec.plaintext = rfc_plaintext();
    CHECK(to_hex(encrypt_initial(spec, keys)) == kRfcProtectedPacket);
    CHECK(initial_overhead(spec) + spec.plaintext.size() == 1200);
}

TEST_CASE("quic: encrypt then decrypt is the identity") {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 50; ++i) {
        InitialPacketSpec spec;
        spec.dcid.resize(rng() % 21);
        spec.scid.resize(rng() % 21);
        spec.token.resize(rng() % 40);
        for (auto* b : {&spec.dcid, &spec.scid, &spec.token})
            for (auto& x : *b) x = static_cast<std::uint8_t>(rng());
        spec.pn_length = 1 + rng() % 4;
        spec.packet_number = rng() % (1ull << (8 * spec.pn_length));
        spec.plaintext.resize(20 + rng() % 1100);
        for (auto& x : spec.plaintext) x = static_cast<std::uint8_t>(rng());
        auto keys = derive_initial_keys(spec.dcid, kQuicVersion1);
        auto wire = encrypt_initial(spec, keys);
        auto pkt = decrypt_initial(wire, keys);
        CHECK(pkt.plaintext == spec.plaintext);
        CHECK(pkt.packet_number == spec.packet_number);
        CHECK(pkt.header.dcid == spec.dcid);
        CHECK(pkt.header.scid == spec.scid);
        CHECK(pkt.header.token_length == spec.token.size());
    }
}

TEST_CASE("quic: tampering fails authentication and junk never crashes") {
    auto keys = derive_initial_keys(hex(kRfcDcid), kQuicVersion1);
    Bytes wire = hex(kRfcProtectedPacket);
    wire[100] ^= 0x01;
    CHECK(error_code([&] { decrypt_initial(wire, keys); }) == "quic.AuthFailure");

    std::mt19937_64 rng(21);
    Bytes good = hex(kRfcProtectedPacket);
    for (int i = 0; i < 3000; ++i) {
        Bytes junk;
        if (i % 2) {
            junk = good;
            for (int k = 0; k < 3; ++k) junk[rng() % 40] = static_cast<std::uint8_t>(rng());
            junk.resize(rng() % junk.size());
        } else {
            junk.resize(rng() % 64);
            for (auto& x : junk) x = static_cast<std::uint8_t>(rng());
        }
        try {
            decrypt_initial(junk, keys);
        } catch (const Error& e) {
            CHECK(e.module() == "quic");
        }
    }
}

TEST_CASE("quic: CRYPTO reassembly") {
    Bytes msg = rfc_chlo_message();
    auto frames = parse_initial_frames(rfc_plaintext());
    REQUIRE(frames.size() == 1);
    CHECK(frames[0].offset == 0);
    CHECK(frames[0].data == msg);
    auto one = reassemble_crypto(frames);
    CHECK(one.status == CryptoStatus::Complete);
    CHECK(one.body == rfc_chlo_body());

    CryptoFrame a{0, Bytes(msg.begin(), msg.begin() + 100)};
    CryptoFrame b{100, Bytes(msg.begin() + 100, msg.end())};
    auto reversed = reassemble_crypto({b, a});
    CHECK(reversed.status == CryptoStatus::Complete);
    CHECK(reversed.body == one.body);

    CryptoFrame overlap{50, Bytes(msg.begin() + 50, msg.begin() + 150)};
    CHECK(reassemble_crypto({overlap, b, a}).body == one.body);

    CryptoFrame c{200, Bytes(msg.begin() + 200, msg.begin() + 240)};
    CHECK(reassemble_crypto({a, c}).status == CryptoStatus::Gap);
    CHECK(reassemble_crypto({a, c}, false).status == CryptoStatus::Incomplete);
    CHECK(reassemble_crypto({a}).status == CryptoStatus::Gap);
}

TEST_CASE("quic: frames not allowed in Initial packets are rejected") {
    CHECK(error_code([] { parse_initial_frames(hex("0800")); }) == "quic.Malformed");
    CHECK(parse_initial_frames(hex("000001")).empty());
}

TEST_CASE("quic: transport parameters of the published hello") {
    auto ch = parse_client_hello(rfc_chlo_body());
    auto tp = parse_transport_params(*ch.quic_transport_parameters, ParamRegistry::defaults());
    CHECK(tp.max_idle_timeout == 30000);
    CHECK(tp.initial_max_data == 0x3fffffffffffffffull);
    CHECK(tp.initial_max_stream_data_bidi_local == 0xffff);
    CHECK(tp.initial_max_stream_data_uni == 0xffff);
    CHECK(tp.initial_max_streams_bidi == 16);
    CHECK(tp.initial_max_streams_uni == 16);
    CHECK(tp.initial_max_stream_data_bidi_remote == 0xffff);
    CHECK(tp.initial_source_connection_id_length == 8);
    CHECK(tp.ids == std::vector<std::uint64_t>{4, 5, 7, 8, 1, 9, 15, 6});
    CHECK_FALSE(tp.grease_quic_bit);
}

TEST_CASE("quic: grease_quic_bit presence and GREASE ids") {
    ByteWriter w;
    w.varint(0x2ab2);
    w.varint(0);
    w.varint(27 + 31 * 5);
    w.varint(1);
    w.u8(7);
    auto tp = parse_transport_params(w.buffer(), ParamRegistry::defaults());
    CHECK(tp.grease_quic_bit);
    CHECK(tp.ids == std::vector<std::uint64_t>{0x2ab2, kGreaseTransportParam});
    CHECK(error_code([] { parse_transport_params(hex("0104"), ParamRegistry::defaults()); }) == "quic.Malformed");
}

TEST_CASE("quic: parameter registry from JSON") {
    auto r = ParamRegistry::from_json(R"({"0x01": "max_idle_timeout", "0x3128": "google_connection_options"})");
    CHECK(r.name_of(1) == "max_idle_timeout");
    CHECK(r.id_of("google_connection_options") == 0x3128u);
    CHECK_FALSE(r.name_of(2));
    CHECK(error_code([] { ParamRegistry::from_json(R"({"zz": "x"})"); }) == "quic.BadRegistry");
}
