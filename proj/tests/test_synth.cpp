#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "vidfp/error.hpp"
#include "vidfp/extract.hpp"
#include "vidfp/pcap.hpp"
#include "vidfp/pipeline.hpp"
#include "vidfp/synth.hpp"

using namespace vidfp;
using testutil::TempDir;

namespace {

const PlatformProfile& profile(const char* name) {
    const auto* p = ProfileSet::defaults().find(name);
    REQUIRE(p != nullptr);
    return *p;
}

AttributeVector vec(const HandshakeFieldSet& f, DictionaryStore& d) {
    return encode(f, AttributeRegistry::defaults(), d, EncodeMode::Train);
}

std::vector<ExtractedFlow> roundtrip(const std::vector<SynthSample>& samples, const TempDir& dir) {
    serialize_to_pcap(samples, dir.file("s.pcap"));
    return extract_pcap(dir.file("s.pcap"));
}

}  // namespace

TEST_CASE("synth: roster") {
    const auto& set = ProfileSet::defaults();
    CHECK(set.select(Provider::YT, Protocol::QUIC).size() == 12);
    CHECK(set.select(Provider::YT, Protocol::TCP).size() == 14);
    CHECK(set.select(Provider::NF, Protocol::TCP).size() == 12);
    CHECK(set.select(Provider::DN, Protocol::TCP).size() == 12);
    CHECK(set.select(Provider::AP, Protocol::TCP).size() == 13);
    CHECK(set.select(Provider::NF, Protocol::QUIC).empty());
    std::set<std::string> names;
    for (const auto& p : set.profiles()) names.insert(p.name);
    CHECK(names.size() == set.profiles().size());
}

TEST_CASE("synth: jitter-free profiles give identical field sets for any seed") {
    const PlatformProfile* quiet = nullptr;
    for (const auto& p : ProfileSet::defaults().profiles())
        if (p.jitter.empty()) quiet = &p;
    REQUIRE(quiet != nullptr);
    Rng a(1), b(2);
    auto s1 = generate(*quiet, a), s2 = generate(*quiet, b);
    DictionaryStore d;
    CHECK(vec(s1.fields, d) == vec(s2.fields, d));
    CHECK(s1.fields.chlo.extension_types == s2.fields.chlo.extension_types);
    CHECK(s1.fields.chlo.cipher_suites == s2.fields.chlo.cipher_suites);
}

TEST_CASE("synth: generation is deterministic given the seed") {
    Rng a(9), b(9);
    const auto& p = profile("yt-quic-windows-chrome");
    for (int i = 0; i < 20; ++i) {
        auto x = generate(p, a), y = generate(p, b);
        CHECK(x.fields == y.fields);
        CHECK(x.chlo_message == y.chlo_message);
        CHECK(x.fired == y.fired);
    }
}

TEST_CASE("synth: extension shuffle keeps the multiset") {
    Rng rng(4);
    const auto& p = profile("yt-tcp-windows-chrome");
    auto first = generate(p, rng).fields.chlo.extension_types;
    auto sorted_first = first;
    std::sort(sorted_first.begin(), sorted_first.end());
    bool reordered = false;
    for (int i = 0; i < 50; ++i) {
        auto t = generate(p, rng).fields.chlo.extension_types;
        reordered |= t != first;
        std::sort(t.begin(), t.end());
        CHECK(t == sorted_first);
    }
    CHECK(reordered);
}

TEST_CASE("synth: a 10% rule fires about 10% of the time") {
    Rng rng(12);
    const auto& p = profile("yt-tcp-windows-firefox");
    int fired = 0;
    for (int i = 0; i < 1000; ++i) {
        auto s = generate(p, rng);
        fired += std::count(s.fired.begin(), s.fired.end(), "no_ticket") > 0;
        CHECK(s.fields.chlo.session_ticket_length.has_value() != (s.fired.size() == 1));
    }
    CHECK(std::abs(fired / 1000.0 - 0.10) <= 0.03);
}

TEST_CASE("synth: one TCP sample survives the pcap round trip") {
    TempDir dir;
    Rng rng(5);
    auto s = generate(profile("yt-tcp-windows-chrome"), rng);
    auto flows = roundtrip({s}, dir);
    REQUIRE(flows.size() == 1);
    REQUIRE(flows[0].fields);
    CHECK(flows[0].record.telemetry.up_packets >= 2);
    CHECK(flows[0].record.provider == Provider::YT);
    DictionaryStore d1, d2;
    CHECK(vec(*flows[0].fields, d1) == vec(s.fields, d2));
    // The SYN carries the template's window and scale.
    REQUIRE(flows[0].fields->tcp);
    CHECK(flows[0].fields->tcp->window_size == s.fields.tcp->window_size);
    CHECK(flows[0].fields->tcp->window_scale == s.fields.tcp->window_scale);
}

TEST_CASE("synth: iOS Safari hello decodes field for field") {
    TempDir dir;
    Rng rng(6);
    auto s = generate(profile("yt-tcp-ios-safari"), rng);
    auto flows = roundtrip({s}, dir);
    REQUIRE(flows.size() == 1);
    REQUIRE(flows[0].fields);
    CHECK(flows[0].fields->chlo == s.fields.chlo);
    CHECK(*flows[0].fields == s.fields);
}

TEST_CASE("synth: QUIC Initials decrypt back to the generated hello") {
    Rng rng(7);
    auto s = generate(profile("yt-quic-windows-firefox"), rng);
    auto datagrams = build_quic_initials(s);
    REQUIRE_FALSE(datagrams.empty());
    auto keys = derive_initial_keys(s.quic_dcid, s.quic_version);
    std::vector<CryptoFrame> frames;
    for (const auto& d : datagrams) {
        CHECK(d.size() >= 1200);
        auto pkt = decrypt_initial(d, keys);
        for (auto& f : parse_initial_frames(pkt.plaintext)) frames.push_back(f);
    }
    auto re = reassemble_crypto(frames);
    REQUIRE(re.status == CryptoStatus::Complete);
    CHECK(Bytes(s.chlo_message.begin() + 4, s.chlo_message.end()) == re.body);
    auto ch = parse_client_hello(re.body);
    CHECK(ch == s.fields.chlo);
    auto tp = parse_transport_params(*ch.quic_transport_parameters, ParamRegistry::defaults());
    CHECK(tp == *s.fields.quic_params);
}

TEST_CASE("synth: empty sample list gives a valid empty pcap") {
    TempDir dir;
    serialize_to_pcap({}, dir.file("e.pcap"));
    PcapReader r(dir.file("e.pcap"));
    PcapRecord rec;
    CHECK_FALSE(r.next(rec));
}

TEST_CASE("synth: corpus round trip and label fidelity") {
    TempDir dir;
    SynthOptions opt;
    opt.per_profile = 3;
    opt.seed = 2;
    opt.downstream = DownstreamPlan{2.0, 20, 1200};
    auto samples = synth_corpus(ProfileSet::defaults(), opt);
    CHECK(samples.size() == 3 * ProfileSet::defaults().profiles().size());
    auto eps = serialize_to_pcap(samples, dir.file("c.pcap"));
    write_labels_csv(samples, eps, dir.file("c.csv"));
    auto labels = read_labels_csv(dir.file("c.csv"));
    CHECK(labels.size() == samples.size());

    auto flows = extract_pcap(dir.file("c.pcap"));
    CHECK(flows.size() == samples.size());
    std::map<FlowKey, const SynthSample*> by_key;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Transport t = samples[i].protocol == Protocol::TCP ? Transport::TCP : Transport::UDP;
        by_key[flow_key(eps[i].client, eps[i].client_port, eps[i].server, eps[i].server_port, t).key] = &samples[i];
    }
    std::set<FlowKey> seen;
    for (const auto& f : flows) {
        REQUIRE(f.fields);
        CHECK(seen.insert(f.record.key).second);
        auto it = labels.find(f.record.key);
        REQUIRE(it != labels.end());
        const auto* s = by_key.at(f.record.key);
        CHECK(it->second == s->label);
        DictionaryStore d1, d2;
        CHECK(vec(*f.fields, d1) == vec(s->fields, d2));
        // TCP flows also carry the SYN-ACK downstream.
        CHECK(f.record.telemetry.down_packets == (s->protocol == Protocol::TCP ? 21u : 20u));
        CHECK(f.record.provider == s->provider);
    }
}

TEST_CASE("synth: perturbation changes the template") {
    Rng rng(3);
    const auto& p = profile("yt-tcp-windows-chrome");
    auto q = perturb(p, rng, 3);
    CHECK(q.spec != p.spec);
    CHECK(q.label == p.label);
}

TEST_CASE("synth: bad profile documents are rejected") {
    bool threw = false;
    try {
        ProfileSet::from_json(R"({"schema": "vidfp.profiles/1", "bases": {}, "profiles": [{"name": "x"}]})");
    } catch (const Error& e) {
        threw = e.qualified_code() == "synth.BadProfile";
    }
    CHECK(threw);
}

TEST_CASE("synth: a QUIC hello without transport parameters decodes none") {
    PlatformProfile p = profile("yt-quic-ios-safari");
    p.jitter.clear();
    auto& exts = p.spec["tls"]["extensions"];
    for (std::size_t i = 0; i < exts.size(); ++i)
        if (exts[i].value("type", "") == "quic_transport_parameters") exts.erase(i--);
    Rng rng(8);
    auto s = generate(p, rng);
    CHECK_FALSE(s.fields.chlo.quic_transport_parameters);
    CHECK_FALSE(s.fields.quic_params);
    TempDir dir;
    auto flows = roundtrip({s}, dir);
    REQUIRE(flows.size() == 1);
    REQUIRE(flows[0].fields);
    CHECK_FALSE(flows[0].fields->quic_params);
    DictionaryStore d1, d2;
    CHECK(vec(*flows[0].fields, d1) == vec(s.fields, d2));
}
