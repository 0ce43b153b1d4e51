#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vidfp/bytes.hpp"

namespace vidfp {

constexpr std::uint32_t kQuicVersion1 = 0x00000001;

struct QuicHeaderFields {
    std::uint32_t version = 0;
    Bytes dcid;
    Bytes scid;
    std::uint64_t token_length = 0;
    std::size_t udp_payload_size = 0;

    bool operator==(const QuicHeaderFields&) const = default;
};

/// True iff the datagram starts with a long header whose version is
/// recognized (v1 plus `extra_versions`) and whose packet type is Initial.
bool is_quic_initial(ByteSpan udp_payload, std::span<const std::uint32_t> extra_versions = {});

struct InitialSecrets {
    Bytes initial_secret;
    Bytes client_secret;
    Bytes server_secret;
};

struct PacketProtectionKeys {
    Bytes key;  // AES-128-GCM key
    Bytes iv;
    Bytes hp;   // header protection key
};

/// HKDF-Extract with the version salt, then HKDF-Expand-Label "client in" /
/// "server in". Throws quic.UnknownVersionSalt for versions other than v1.
InitialSecrets derive_initial_secrets(ByteSpan dcid, std::uint32_t version);
PacketProtectionKeys derive_packet_keys(ByteSpan secret);
/// Client-direction Initial keys for `dcid`.
PacketProtectionKeys derive_initial_keys(ByteSpan dcid, std::uint32_t version);

Bytes hkdf_extract(ByteSpan salt, ByteSpan ikm);
Bytes hkdf_expand_label(ByteSpan secret, std::string_view label, ByteSpan context, std::size_t length);

struct DecryptedInitial {
    QuicHeaderFields header;
    std::uint64_t packet_number = 0;
    Bytes unprotected_header;
    Bytes plaintext;
    std::size_t packet_length = 0;  // bytes of the datagram this packet occupied
};

/// Removes header protection and opens the AEAD. Throws quic.Malformed for
/// unparseable headers and quic.AuthFailure when the tag does not verify.
DecryptedInitial decrypt_initial(ByteSpan datagram, const PacketProtectionKeys& keys);

struct InitialPacketSpec {
    std::uint32_t version = kQuicVersion1;
    Bytes dcid;
    Bytes scid;
    Bytes token;
    std::uint64_t packet_number = 0;
    std::size_t pn_length = 2;  // 1..4
    Bytes plaintext;            // frames, already padded
};

/// Inverse of decrypt_initial; the length field is always a 2-byte varint.
Bytes encrypt_initial(const InitialPacketSpec& spec, const PacketProtectionKeys& keys);

/// Bytes occupied by the header plus tag around `plaintext_len` bytes of frames.
std::size_t initial_overhead(const InitialPacketSpec& spec);

struct CryptoFrame {
    std::uint64_t offset = 0;
    Bytes data;
};

/// CRYPTO frames of an Initial payload; PADDING, PING and ACK are skipped.
/// Throws quic.Malformed on frame types not permitted in Initial packets.
std::vector<CryptoFrame> parse_initial_frames(ByteSpan plaintext);

enum class CryptoStatus { Complete, Incomplete, Gap };

struct CryptoReassembly {
    CryptoStatus status = CryptoStatus::Incomplete;
    Bytes body;  // ClientHello body without the 4-byte handshake header
};

/// Stitches CRYPTO frames (any arrival order, overlaps allowed) into the
/// stream from offset 0 and returns the ClientHello once complete. When
/// `final` is set, a missing range before completion is reported as Gap.
CryptoReassembly reassemble_crypto(const std::vector<CryptoFrame>& frames, bool final = true);

struct QuicTransportParam {
    std::uint64_t id = 0;  // as on the wire
    Bytes value;

    bool operator==(const QuicTransportParam&) const = default;
};

struct QuicTransportParams {
    std::vector<QuicTransportParam> params;
    std::vector<std::uint64_t> ids;  // GREASE ids canonicalized to 27

    std::optional<std::uint64_t> max_idle_timeout;
    std::optional<std::uint64_t> max_udp_payload_size;
    std::optional<std::uint64_t> initial_max_data;
    std::optional<std::uint64_t> initial_max_stream_data_bidi_local;
    std::optional<std::uint64_t> initial_max_stream_data_bidi_remote;
    std::optional<std::uint64_t> initial_max_stream_data_uni;
    std::optional<std::uint64_t> initial_max_streams_bidi;
    std::optional<std::uint64_t> initial_max_streams_uni;
    std::optional<std::uint64_t> max_ack_delay;
    bool disable_active_migration = false;
    std::optional<std::uint64_t> active_connection_id_limit;
    std::optional<std::size_t> initial_source_connection_id_length;
    std::optional<std::uint64_t> max_datagram_frame_size;
    bool grease_quic_bit = false;
    bool initial_rtt = false;
    std::optional<Bytes> google_connection_options;
    std::optional<Bytes> user_agent;
    std::optional<Bytes> google_version;
    std::optional<Bytes> version_information;

    bool operator==(const QuicTransportParams&) const = default;
};

constexpr bool is_grease_transport_param(std::uint64_t id) {
    return id >= 27 && (id - 27) % 31 == 0;
}
constexpr std::uint64_t kGreaseTransportParam = 27;

/// Transport parameter id to name mapping. Standard ids are pre-filled; the
/// Google-specific ids are operator-confirmable defaults.
class ParamRegistry {
public:
    ParamRegistry() = default;
    explicit ParamRegistry(std::map<std::uint64_t, std::string> names) : names_(std::move(names)) {}

    static ParamRegistry defaults();
    /// JSON object `{"0x01": "max_idle_timeout", ...}`.
    static ParamRegistry from_json(std::string_view json_text);
    static ParamRegistry load(const std::string& path);

    std::optional<std::string> name_of(std::uint64_t id) const;
    std::optional<std::uint64_t> id_of(std::string_view name) const;
    const std::map<std::uint64_t, std::string>& names() const noexcept { return names_; }

private:
    std::map<std::uint64_t, std::string> names_;
};

/// Throws quic.Malformed with the offset on truncated entries or bad varints.
QuicTransportParams parse_transport_params(ByteSpan ext_body, const ParamRegistry& registry);

}  // namespace vidfp
