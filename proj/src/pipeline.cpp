#include "vidfp/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "vidfp/error.hpp"

namespace vidfp {

using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

json label_json(const PlatformLabel& l) { return {{"device", l.device}, {"os", l.os}, {"agent", l.agent}}; }

}  // namespace

std::map<FlowKey, PlatformLabel> read_labels_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("pipeline", "IOError", "cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line).size() < 9)
        throw Error("pipeline", "BadLabels", path + ": missing header");
    std::map<FlowKey, PlatformLabel> out;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 9) throw Error("pipeline", "BadLabels", path + ":" + std::to_string(n) + ": expected 9 columns");
        try {
            const Transport t = f[4] == "UDP" ? Transport::UDP : f[4] == "TCP" ? Transport::TCP : Transport::Other;
            if (t == Transport::Other) throw std::invalid_argument("proto must be TCP or UDP");
            auto k = flow_key(IpAddress::parse(f[0]), static_cast<std::uint16_t>(std::stoul(f[2])),
                              IpAddress::parse(f[1]), static_cast<std::uint16_t>(std::stoul(f[3])), t);
            out[k.key] = PlatformLabel{f[6], f[7], f[8]};
        } catch (const std::exception& e) {
            throw Error("pipeline", "BadLabels", path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

FlowSample sample_from_fields(const HandshakeFieldSet& fields, Provider provider, const Layout& layout,
                              std::optional<PlatformLabel> label) {
    return FlowSample{provider, fields.protocol, std::move(label), field_values(fields, layout)};
}

std::vector<FlowSample> read_flows_jsonl(const std::string& path, const AttributeRegistry& registry) {
    std::ifstream in(path);
    if (!in) throw Error("pipeline", "IOError", "cannot open " + path);
    const Layout tcp(registry, Protocol::TCP), quic(registry, Protocol::QUIC);
    std::vector<FlowSample> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            if (!j.contains("fields") || j.at("fields").is_null()) continue;
            FlowSample s;
            s.provider = parse_provider(j.at("provider").get<std::string>());
            s.protocol = parse_protocol(j.at("protocol").get<std::string>());
            if (j.contains("label") && j.at("label").is_object()) {
                const auto& l = j.at("label");
                s.label = PlatformLabel{l.at("device").get<std::string>(), l.at("os").get<std::string>(),
                                        l.at("agent").get<std::string>()};
            }
            const Layout& layout = s.protocol == Protocol::TCP ? tcp : quic;
            const auto& fj = j.at("fields");
            for (const auto* spec : layout.specs()) {
                auto it = fj.find(spec->label);
                s.values[spec->label] = it == fj.end() ? FieldValue{} : field_value_from_json(*it, spec->type);
            }
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw Error("pipeline", "BadFlows", path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

TrainingSet build_training_set(const std::vector<FlowSample>& samples, Provider provider, Protocol protocol,
                               Objective objective, const AttributeRegistry& registry) {
    TrainingSet set{Layout(registry, protocol), {}, {}};
    Encoder enc(registry, protocol);
    std::vector<std::vector<double>> rows;
    std::vector<std::string> names;
    for (const auto& s : samples) {
        if (s.provider != provider || s.protocol != protocol || !s.label) continue;
        rows.push_back(enc.encode(s.values, set.dicts, EncodeMode::Train).values);
        names.push_back(objective_label(*s.label, objective));
    }
    set.dicts.freeze();
    set.data = Dataset::from_named(std::move(rows), names);
    return set;
}

Forest train_model(const TrainingSet& set, Provider provider, Protocol protocol, Objective objective,
                   const TrainConfig& config) {
    Forest f = train(set.data, config);
    f.provider = to_string(provider);
    f.protocol = to_string(protocol);
    f.objective = to_string(objective);
    f.layout_fingerprint = set.layout.fingerprint();
    f.dict_version = set.dicts.version();
    f.dictionaries = set.dicts;
    return f;
}

std::vector<SynthSample> synth_corpus(const ProfileSet& profiles, const SynthOptions& o) {
    std::vector<const PlatformProfile*> chosen;
    for (const auto& p : profiles.profiles())
        if ((!o.provider || p.provider == *o.provider) && (!o.protocol || p.protocol == *o.protocol))
            chosen.push_back(&p);
    Rng rng(o.seed);
    std::vector<SynthSample> out;
    out.reserve(chosen.size() * o.per_profile);
    for (std::size_t i = 0; i < o.per_profile; ++i) {
        for (const auto* p : chosen) {
            SynthSample s = generate(*p, rng);
            s.downstream = o.downstream;
            s.start_ns = o.start_ns + static_cast<TimestampNs>(out.size()) * o.spacing_ns;
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::size_t write_flows_jsonl(const std::string& pcap, std::ostream& out, const ExtractConfig& config,
                              const std::map<FlowKey, PlatformLabel>* labels) {
    std::size_t n = 0;
    FlowExtractor ex(config, [&](ExtractedFlow&& f) {
        json j = flow_to_json(f);
        if (labels) {
            auto it = labels->find(f.record.key);
            if (it != labels->end()) j["label"] = label_json(it->second);
        }
        out << j.dump() << '\n';
        ++n;
    });
    PcapReader reader(pcap);
    PcapRecord rec;
    while (reader.next(rec)) ex.add(decode_packet(rec.data, reader.link_type(), rec.ts_ns));
    ex.finish();
    return n;
}

std::size_t write_predictions_jsonl(const std::string& pcap, std::ostream& out, const Bank& bank,
                                    const ExtractConfig& config) {
    std::size_t n = 0;
    FlowExtractor ex(config, [&](ExtractedFlow&& f) {
        if (f.record.provider == Provider::None || !f.fields) return;
        json j = flow_to_json(f);
        j.erase("fields");
        try {
            j["cascade"] = classify_flow(*f.fields, f.record.provider, bank).to_json();
        } catch (const Error& e) {
            j["cascade"] = {{"outcome", "unknown"}, {"confidence", 0.0}, {"models_evaluated", 0}};
            j["error"] = e.qualified_code();
        }
        out << j.dump() << '\n';
        ++n;
    });
    PcapReader reader(pcap);
    PcapRecord rec;
    while (reader.next(rec)) ex.add(decode_packet(rec.data, reader.link_type(), rec.ts_ns));
    ex.finish();
    return n;
}

}  // namespace vidfp
