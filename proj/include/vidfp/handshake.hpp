#pragma once

#include <cstdint>
#include <optional>

#include "vidfp/flow.hpp"
#include "vidfp/quic.hpp"
#include "vidfp/tls.hpp"

namespace vidfp {

/// Everything the attribute encoder reads from one flow's connection
/// establishment. Exactly one of `tcp` / `quic` is set, matching `protocol`.
struct HandshakeFieldSet {
    Protocol protocol = Protocol::TCP;
    std::uint32_t init_packet_size = 0;  // IP length of the first client packet
    std::uint8_t ttl = 0;                // TTL or hop limit of that packet
    std::optional<TcpHandshakeFields> tcp;
    std::optional<QuicHeaderFields> quic;
    ClientHello chlo;
    std::optional<QuicTransportParams> quic_params;

    bool operator==(const HandshakeFieldSet&) const = default;
};

}  // namespace vidfp
