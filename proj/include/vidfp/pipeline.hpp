#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vidfp/attributes.hpp"
#include "vidfp/bank.hpp"
#include "vidfp/dataset.hpp"
#include "vidfp/extract.hpp"
#include "vidfp/forest.hpp"
#include "vidfp/labels.hpp"
#include "vidfp/synth.hpp"

namespace vidfp {

/// Labels CSV rows keyed by canonical flow key. Throws pipeline.BadLabels.
std::map<FlowKey, PlatformLabel> read_labels_csv(const std::string& path);

/// One parsed, provider-tagged flow as stored in flows JSONL.
struct FlowSample {
    Provider provider = Provider::None;
    Protocol protocol = Protocol::TCP;
    std::optional<PlatformLabel> label;
    FieldValues values;
};

FlowSample sample_from_fields(const HandshakeFieldSet& fields, Provider provider, const Layout& layout,
                              std::optional<PlatformLabel> label = std::nullopt);

/// Flows without parsed fields are skipped. Throws pipeline.BadFlows.
std::vector<FlowSample> read_flows_jsonl(const std::string& path, const AttributeRegistry& registry);

/// Labeled samples of one (provider, protocol) encoded with fresh
/// dictionaries built in sample order.
struct TrainingSet {
    Layout layout;
    DictionaryStore dicts;
    Dataset data;
};

TrainingSet build_training_set(const std::vector<FlowSample>& samples, Provider provider, Protocol protocol,
                               Objective objective, const AttributeRegistry& registry);

/// Trains and stamps a forest with its metadata and dictionaries.
Forest train_model(const TrainingSet& set, Provider provider, Protocol protocol, Objective objective,
                   const TrainConfig& config);

struct SynthOptions {
    std::size_t per_profile = 10;
    std::uint64_t seed = 1;
    std::optional<Provider> provider;
    std::optional<Protocol> protocol;
    DownstreamPlan downstream{};
    TimestampNs start_ns = 1'700'000'000LL * kNsPerSec;
    TimestampNs spacing_ns = kNsPerSec / 100;
};

/// Interleaves profiles so consecutive samples rotate through the roster.
std::vector<SynthSample> synth_corpus(const ProfileSet& profiles, const SynthOptions& options);

/// Streams `pcap` through the extractor and writes one JSON object per flow.
/// Labels, when given, are attached by flow key. Returns the flow count.
std::size_t write_flows_jsonl(const std::string& pcap, std::ostream& out, const ExtractConfig& config,
                              const std::map<FlowKey, PlatformLabel>* labels = nullptr);

/// Classifies each provider-tagged flow of `pcap`; flows whose provider has no
/// model record a bank.MissingModel error instead. Returns the record count.
std::size_t write_predictions_jsonl(const std::string& pcap, std::ostream& out, const Bank& bank,
                                    const ExtractConfig& config);

}  // namespace vidfp
