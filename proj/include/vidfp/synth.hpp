#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "vidfp/handshake.hpp"
#include "vidfp/labels.hpp"
#include "vidfp/provider.hpp"

namespace vidfp {

using Rng = std::mt19937_64;

struct JitterRule {
    std::string name;
    std::string kind;  // shuffle_extensions, drop_extension, choice, extension_value, param_value
    double probability = 1.0;
    nlohmann::json params;
};

/// A resolved platform template: bases and edits already applied.
struct PlatformProfile {
    std::string name;
    Provider provider = Provider::None;
    Protocol protocol = Protocol::TCP;
    PlatformLabel label;
    nlohmann::json spec;  // ip, tcp | quic, tls, sni, session sections
    std::vector<JitterRule> jitter;
};

class ProfileSet {
public:
    static const ProfileSet& defaults();
    /// Throws synth.BadProfile on schema errors.
    static ProfileSet from_json(std::string_view json_text);
    static ProfileSet load(const std::string& path);

    const std::vector<PlatformProfile>& profiles() const noexcept { return profiles_; }
    std::vector<const PlatformProfile*> select(Provider provider, Protocol protocol) const;
    const PlatformProfile* find(std::string_view name) const;

private:
    std::vector<PlatformProfile> profiles_;
};

/// Even downstream traffic after the handshake, used for telemetry.
struct DownstreamPlan {
    double duration_s = 0;
    std::uint64_t packets = 0;
    std::uint32_t payload_size = 1350;  // transport payload bytes per packet
};

struct SynthSample {
    std::string profile;
    PlatformLabel label;
    Provider provider = Provider::None;
    Protocol protocol = Protocol::TCP;
    std::string sni;
    std::vector<std::string> fired;  // jitter rules that triggered

    /// Built straight from the template, never by parsing wire bytes.
    HandshakeFieldSet fields;

    // Wire material.
    Bytes chlo_message;  // handshake header plus ClientHello body
    std::uint16_t tcp_window = 0;
    std::uint8_t tcp_flags = 0;
    Bytes tcp_options;
    std::size_t tls_record_split = 0;  // >0: first record carries this many bytes
    Bytes quic_dcid, quic_scid, quic_token;
    std::uint32_t quic_version = kQuicVersion1;
    std::size_t quic_datagram_size = 1200;

    std::uint8_t ttl = 64;
    DownstreamPlan downstream;
    TimestampNs start_ns = 0;
};

/// Instantiates `profile` with its jitter rules; deterministic given `rng`.
SynthSample generate(const PlatformProfile& profile, Rng& rng);

/// Copy of `profile` with `changes` random template mutations (TTL, window,
/// cipher order, dropped extensions, ...) for open-set experiments.
PlatformProfile perturb(const PlatformProfile& profile, Rng& rng, int changes);

/// Wire-level identity of one synthetic flow.
struct FlowEndpoints {
    IpAddress client, server;
    std::uint16_t client_port = 0, server_port = 443;
    Transport transport = Transport::TCP;
};

/// Endpoint assignment used by serialize_to_pcap for sample `index`.
FlowEndpoints endpoints_for(const SynthSample& sample, std::size_t index);

/// Writes the connection establishment (and planned downstream packets) of
/// every sample, merged in timestamp order. Throws synth.IOError.
std::vector<FlowEndpoints> serialize_to_pcap(const std::vector<SynthSample>& samples, const std::string& path);

/// `src,dst,sport,dport,proto,provider,device,os,agent`, one row per flow.
void write_labels_csv(const std::vector<SynthSample>& samples, const std::vector<FlowEndpoints>& endpoints,
                      const std::string& path);

/// QUIC Initial datagrams carrying `sample`'s ClientHello, in send order.
std::vector<Bytes> build_quic_initials(const SynthSample& sample);

/// TLS records carrying `sample`'s ClientHello.
Bytes build_tls_records(const SynthSample& sample);

}  // namespace vidfp
