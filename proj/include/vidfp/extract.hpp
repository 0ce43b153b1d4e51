#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "vidfp/attributes.hpp"
#include "vidfp/flow.hpp"
#include "vidfp/handshake.hpp"
#include "vidfp/provider.hpp"
#include "vidfp/quic.hpp"

namespace vidfp {

struct ExtractConfig {
    ProviderTable providers = ProviderTable::defaults();
    ParamRegistry params = ParamRegistry::defaults();
    TimestampNs idle_timeout = kFlowIdleTimeout;
    std::vector<std::uint32_t> extra_quic_versions;
};

/// A finalized flow: its record (buffers released) and, when the ClientHello
/// was recovered, the parsed handshake fields.
struct ExtractedFlow {
    FlowRecord record;
    std::optional<HandshakeFieldSet> fields;
};

/// Tries to complete the flow's ClientHello from its buffered bytes. On
/// success the record becomes Parsed and is tagged with SNI and provider.
/// `final` turns an incomplete handshake into Unavailable.
std::optional<HandshakeFieldSet> try_parse_handshake(FlowRecord& record, const ExtractConfig& config,
                                                     bool final);

/// Streaming flow table. Flows idle longer than the timeout (in capture time)
/// and all flows at finish() are handed to the sink in finalization order.
class FlowExtractor {
public:
    using Sink = std::function<void(ExtractedFlow&&)>;

    FlowExtractor(ExtractConfig config, Sink sink);

    void add(const PacketView& pkt);
    void finish();

    std::uint64_t packets_seen() const noexcept { return packets_; }
    std::uint64_t packets_ignored() const noexcept { return ignored_; }

private:
    struct Entry {
        FlowRecord record;
        std::optional<HandshakeFieldSet> fields;
    };

    void finalize(Entry& e);
    void sweep(TimestampNs now);

    ExtractConfig config_;
    Sink sink_;
    std::unordered_map<FlowKey, Entry, FlowKeyHash> table_;
    std::uint64_t packets_ = 0;
    std::uint64_t ignored_ = 0;
    TimestampNs last_sweep_ = 0;
    bool swept_once_ = false;
};

/// Runs the extractor over a pcap file; flows come back in finalization order.
std::vector<ExtractedFlow> extract_pcap(const std::string& path, const ExtractConfig& config = {});

/// One flows-JSONL record. `vector` is the encoded attribute vector, if any.
nlohmann::json flow_to_json(const ExtractedFlow& flow, const AttributeVector* vector = nullptr);

/// Flattened handshake fields keyed by attribute label, for diagnostics and
/// the JSONL "fields" object.
nlohmann::json fields_to_json(const HandshakeFieldSet& fields, const AttributeRegistry& registry);

}  // namespace vidfp
