#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vidfp/bytes.hpp"
#include "vidfp/packet.hpp"

namespace vidfp {

/// Flags and options of the client's first SYN segment.
struct TcpHandshakeFields {
    bool cwr = false, ece = false, urg = false, ack = false;
    bool psh = false, rst = false, syn = false, fin = false;
    std::uint16_t window_size = 0;
    std::optional<std::uint16_t> mss;
    std::optional<std::uint8_t> window_scale;
    bool sack_permitted = false;
    bool options_malformed = false;

    bool operator==(const TcpHandshakeFields&) const = default;
};

TcpHandshakeFields parse_syn(const PacketView& pkt);

namespace tls_ext {
constexpr std::uint16_t server_name = 0;
constexpr std::uint16_t status_request = 5;
constexpr std::uint16_t supported_groups = 10;
constexpr std::uint16_t ec_point_formats = 11;
constexpr std::uint16_t signature_algorithms = 13;
constexpr std::uint16_t alpn = 16;
constexpr std::uint16_t signed_certificate_timestamp = 18;
constexpr std::uint16_t padding = 21;
constexpr std::uint16_t encrypt_then_mac = 22;
constexpr std::uint16_t extended_master_secret = 23;
constexpr std::uint16_t compress_certificate = 27;
constexpr std::uint16_t record_size_limit = 28;
constexpr std::uint16_t delegated_credentials = 34;
constexpr std::uint16_t session_ticket = 35;
constexpr std::uint16_t pre_shared_key = 41;
constexpr std::uint16_t early_data = 42;
constexpr std::uint16_t supported_versions = 43;
constexpr std::uint16_t psk_key_exchange_modes = 45;
constexpr std::uint16_t post_handshake_auth = 49;
constexpr std::uint16_t key_share = 51;
constexpr std::uint16_t quic_transport_parameters = 57;
constexpr std::uint16_t application_settings_old = 17513;  // 0x4469
constexpr std::uint16_t application_settings = 17613;      // 0x44cd
constexpr std::uint16_t renegotiation_info = 0xff01;
}  // namespace tls_ext

/// RFC 8701 reserved values 0x0A0A, 0x1A1A, ..., 0xFAFA.
constexpr bool is_grease(std::uint16_t v) {
    return (v & 0x0f0f) == 0x0a0a && (v >> 8) == (v & 0xff);
}
/// All GREASE codes collapse to this value in decoded lists.
constexpr std::uint16_t kGreaseCanonical = 0x0a0a;
constexpr std::uint16_t canonical_grease(std::uint16_t v) {
    return is_grease(v) ? kGreaseCanonical : v;
}

struct TlsExtension {
    std::uint16_t type = 0;  // as on the wire (GREASE not canonicalized)
    Bytes body;

    bool operator==(const TlsExtension&) const = default;
};

/// Decoded ClientHello. Lists of 2-byte codes keep wire order with GREASE
/// values canonicalized; `extensions` keeps the raw wire bodies.
struct ClientHello {
    std::uint32_t handshake_length = 0;
    std::uint16_t legacy_version = 0;
    Bytes random;
    Bytes session_id;
    std::vector<std::uint16_t> cipher_suites;
    Bytes compression_methods;
    bool has_extensions_block = false;
    std::uint16_t extensions_length = 0;
    std::vector<TlsExtension> extensions;
    std::vector<std::uint16_t> extension_types;

    std::optional<std::string> server_name;
    std::optional<std::uint8_t> status_request_type;
    std::optional<std::vector<std::uint16_t>> supported_groups;
    std::optional<std::vector<std::uint8_t>> ec_point_formats;
    std::optional<std::vector<std::uint16_t>> signature_algorithms;
    std::optional<std::vector<std::string>> alpn;
    std::optional<std::size_t> signed_certificate_timestamp_length;
    std::optional<std::size_t> padding_length;
    bool encrypt_then_mac = false;
    bool extended_master_secret = false;
    std::optional<std::vector<std::uint16_t>> compress_certificate;
    std::optional<std::uint16_t> record_size_limit;
    std::optional<std::vector<std::uint16_t>> delegated_credentials;
    std::optional<std::size_t> session_ticket_length;
    bool pre_shared_key = false;
    std::optional<std::size_t> early_data_length;
    std::optional<std::vector<std::uint16_t>> supported_versions;
    std::optional<std::vector<std::uint8_t>> psk_key_exchange_modes;
    bool post_handshake_auth = false;
    std::optional<std::vector<std::uint16_t>> key_share_groups;
    std::optional<std::vector<std::string>> application_settings;
    bool renegotiation_info = false;
    std::optional<Bytes> quic_transport_parameters;

    bool operator==(const ClientHello&) const = default;

    const TlsExtension* find_extension(std::uint16_t type) const;
};

enum class ChloExtractStatus { Complete, Incomplete, NotTLS, Malformed };

struct ChloExtract {
    ChloExtractStatus status = ChloExtractStatus::Incomplete;
    Bytes body;  // ClientHello body, without the 4-byte handshake header
    std::size_t consumed = 0;  // stream bytes covering the ClientHello records
};

/// Reassembles TLS handshake records (content type 22) from the start of a
/// client byte stream until one ClientHello message is complete.
ChloExtract extract_chlo(ByteSpan stream);

/// Throws vidfp::Error("tls", "Malformed") with the offending offset in the
/// message. Never reads out of bounds.
ClientHello parse_client_hello(ByteSpan body);

std::string compress_certificate_name(std::uint16_t alg);

}  // namespace vidfp
