// vidfp: command-line front end for the fingerprinting pipeline.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vidfp/bank.hpp"
#include "vidfp/error.hpp"
#include "vidfp/forest.hpp"
#include "vidfp/pipeline.hpp"
#include "vidfp/ranker.hpp"
#include "vidfp/report.hpp"
#include "vidfp/synth.hpp"

using namespace vidfp;
using nlohmann::json;

namespace {

bool verbose() {
    const char* lvl = std::getenv("VIDFP_LOG_LEVEL");
    return !lvl || std::string(lvl) != "quiet";
}

void info(const std::string& msg) {
    if (verbose()) std::cerr << "vidfp: " << msg << '\n';
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ','))
        if (!part.empty()) out.push_back(std::stoi(part));
    if (out.empty()) throw Error("cli", "BadArgument", "empty list '" + s + "'");
    return out;
}

std::ofstream open_out(const std::string& path) {
    if (auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cli", "IOError", "cannot write " + path);
    return out;
}

void write_text(const std::string& path, const std::string& text) { open_out(path) << text; }

void require_file(const std::string& path) {
    if (!std::filesystem::exists(path)) throw Error("cli", "MissingFile", path + " does not exist");
}

struct ExtractFlags {
    std::string providers, params;

    ExtractConfig config() const {
        ExtractConfig c;
        if (!providers.empty()) c.providers = ProviderTable::load(providers);
        if (!params.empty()) c.params = ParamRegistry::load(params);
        return c;
    }
    void add(CLI::App* cmd) {
        cmd->add_option("--providers", providers, "Provider pattern JSON (defaults to the built-in table)");
        cmd->add_option("--params", params, "QUIC transport parameter registry JSON");
    }
};

struct ModelFlags {
    std::string data, provider, protocol, objective = "platform", config_path;
    int trees = 100, depth = 16, n_attrs = 16;
    std::uint64_t seed = 1;

    void add(CLI::App* cmd) {
        cmd->add_option("--data", data, "Labeled flows JSONL from `vidfp extract --labels`")->required();
        cmd->add_option("--provider", provider, "YT, NF, DN or AP")->required();
        cmd->add_option("--protocol", protocol, "TCP or QUIC")->required();
        cmd->add_option("--objective", objective, "platform, device or agent");
        cmd->add_option("--config", config_path, "TrainConfig JSON; flags below override it");
        cmd->add_option("--trees", trees, "Number of trees");
        cmd->add_option("--depth", depth, "Maximum tree depth");
        cmd->add_option("--n-attrs", n_attrs, "Slots drawn per split");
        cmd->add_option("--seed", seed, "Master RNG seed");
    }

    TrainConfig config(CLI::App* cmd) const {
        TrainConfig c;
        if (!config_path.empty()) {
            require_file(config_path);
            std::ifstream in(config_path);
            c = TrainConfig::from_json(json::parse(in));
        }
        if (config_path.empty() || cmd->count("--trees")) c.n_trees = trees;
        if (config_path.empty() || cmd->count("--depth")) c.max_depth = depth;
        if (config_path.empty() || cmd->count("--n-attrs")) c.n_attributes_per_split = n_attrs;
        if (config_path.empty() || cmd->count("--seed")) c.rng_seed = seed;
        return c;
    }

    TrainingSet training_set() const {
        require_file(data);
        auto samples = read_flows_jsonl(data, AttributeRegistry::defaults());
        auto set = build_training_set(samples, parse_provider(provider), parse_protocol(protocol),
                                      parse_objective(objective), AttributeRegistry::defaults());
        if (set.data.size() == 0)
            throw Error("pipeline", "NoSamples", "no labeled " + provider + "/" + protocol + " flows in " + data);
        return set;
    }
};

int run(int argc, char** argv) {
    CLI::App app{"Video streaming user-platform fingerprinting from connection handshakes"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic capture from platform profiles");
    std::string profiles_path, out_pcap, out_labels, synth_provider, synth_protocol;
    std::size_t count = 10;
    std::uint64_t synth_seed = 1;
    double duration = 0;
    std::uint64_t packets = 0;
    synth->add_option("--profiles", profiles_path, "Profile JSON (defaults to the built-in set)");
    synth->add_option("--count", count, "Samples per profile");
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--provider", synth_provider, "Restrict to one provider");
    synth->add_option("--protocol", synth_protocol, "Restrict to TCP or QUIC");
    synth->add_option("--duration", duration, "Downstream seconds per flow");
    synth->add_option("--packets", packets, "Downstream packets per flow");
    synth->add_option("--out-pcap", out_pcap, "Output pcap")->required();
    synth->add_option("--out-labels", out_labels, "Output labels CSV")->required();

    // extract
    auto* extract = app.add_subcommand("extract", "Extract handshake fields and telemetry per flow");
    std::string pcap, out, labels;
    ExtractFlags xflags;
    extract->add_option("--pcap", pcap, "Input pcap")->required();
    extract->add_option("--out", out, "Flows JSONL")->required();
    extract->add_option("--labels", labels, "Labels CSV to attach by 5-tuple");
    xflags.add(extract);

    // train / tune
    auto* trainc = app.add_subcommand("train", "Train one objective model");
    ModelFlags tflags;
    std::string model_out;
    tflags.add(trainc);
    trainc->add_option("--out", model_out, "Model JSON")->required();

    auto* tune = app.add_subcommand("tune", "Grid-search depth and attributes per split with k-fold CV");
    ModelFlags gflags;
    std::string depths = "4,8,16", n_attrs_grid = "8,16,32", surface_out, tune_out;
    int folds = 10;
    gflags.add(tune);
    tune->add_option("--depths", depths, "Comma-separated depths");
    tune->add_option("--n-attrs-grid", n_attrs_grid, "Comma-separated attributes-per-split values");
    tune->add_option("--folds", folds, "Cross-validation folds");
    tune->add_option("--surface-out", surface_out, "Accuracy surface CSV")->required();
    tune->add_option("--out", tune_out, "Best model JSON")->required();

    // rank
    auto* rank = app.add_subcommand("rank", "Information-gain ranking and field distribution report");
    std::string rank_data, group, rank_out, fields_out;
    rank->add_option("--data", rank_data, "Labeled flows JSONL")->required();
    rank->add_option("--group", group, "provider/protocol/objective, e.g. YT/QUIC/platform")->required();
    rank->add_option("--out", rank_out, "Importance CSV")->required();
    rank->add_option("--fields-out", fields_out, "Field distribution CSV");

    // bank
    auto* bankc = app.add_subcommand("bank", "Write a bank manifest for trained models");
    std::vector<std::string> model_paths;
    std::string manifest_out;
    double bank_threshold = kDefaultThreshold;
    bankc->add_option("--models", model_paths, "Model JSON files")->required();
    bankc->add_option("--threshold", bank_threshold, "Cascade confidence threshold");
    bankc->add_option("--out", manifest_out, "Manifest JSON")->required();

    // classify
    auto* classify = app.add_subcommand("classify", "Classify provider flows of a capture");
    std::string cpcap, bank_path, cout_path;
    double threshold = -1;
    ExtractFlags cflags;
    classify->add_option("--pcap", cpcap, "Input pcap")->required();
    classify->add_option("--bank", bank_path, "Bank manifest JSON")->required();
    classify->add_option("--out", cout_path, "Predictions JSONL")->required();
    classify->add_option("--threshold", threshold, "Override the manifest threshold");
    cflags.add(classify);

    // report
    auto* report = app.add_subcommand("report", "Aggregate predictions into telemetry reports");
    std::string predictions, out_dir, group_by = "provider,device,agent";
    double rthreshold = kDefaultThreshold, utc_offset_h = 0;
    report->add_option("--predictions", predictions, "Predictions JSONL")->required();
    report->add_option("--out-dir", out_dir, "Output directory")->required();
    report->add_option("--threshold", rthreshold, "Minimum reported confidence");
    report->add_option("--utc-offset-hours", utc_offset_h, "Fixed offset for local hours");
    report->add_option("--group-by", group_by, "Comma-separated: device, agent, provider");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (*synth) {
        const ProfileSet set = profiles_path.empty() ? ProfileSet::defaults() : ProfileSet::load(profiles_path);
        SynthOptions o;
        o.per_profile = count;
        o.seed = synth_seed;
        if (!synth_provider.empty()) o.provider = parse_provider(synth_provider);
        if (!synth_protocol.empty()) o.protocol = parse_protocol(synth_protocol);
        o.downstream = DownstreamPlan{duration, packets};
        auto samples = synth_corpus(set, o);
        auto eps = serialize_to_pcap(samples, out_pcap);
        write_labels_csv(samples, eps, out_labels);
        info("wrote " + std::to_string(samples.size()) + " synthetic flows");
    } else if (*extract) {
        require_file(pcap);
        std::map<FlowKey, PlatformLabel> table;
        if (!labels.empty()) table = read_labels_csv(labels);
        auto os = open_out(out);
        auto n = write_flows_jsonl(pcap, os, xflags.config(), labels.empty() ? nullptr : &table);
        info("extracted " + std::to_string(n) + " flows");
    } else if (*trainc) {
        auto set = tflags.training_set();
        auto f = train_model(set, parse_provider(tflags.provider), parse_protocol(tflags.protocol),
                             parse_objective(tflags.objective), tflags.config(trainc));
        if (f.degenerate)
            throw Error("forest", "DegenerateData", "training data holds a single class: " + set.data.classes.front());
        f.save(model_out);
        info("trained on " + std::to_string(set.data.size()) + " flows, " + std::to_string(f.classes.size()) +
             " classes");
    } else if (*tune) {
        auto set = gflags.training_set();
        auto base = gflags.config(tune);
        auto g = grid_search(set.data, parse_int_list(depths), parse_int_list(n_attrs_grid), base, folds, base.rng_seed);
        write_text(surface_out, g.surface_csv());
        auto f = train_model(set, parse_provider(gflags.provider), parse_protocol(gflags.protocol),
                             parse_objective(gflags.objective), g.best);
        f.save(tune_out);
        info("best depth " + std::to_string(g.best.max_depth) + ", attributes " +
             std::to_string(g.best.n_attributes_per_split) + ", accuracy " + std::to_string(g.best_accuracy));
    } else if (*rank) {
        require_file(rank_data);
        std::stringstream gs(group);
        std::string prov, proto, obj;
        std::getline(gs, prov, '/');
        std::getline(gs, proto, '/');
        std::getline(gs, obj, '/');
        if (obj.empty()) throw Error("cli", "BadArgument", "--group must look like YT/QUIC/platform");
        auto samples = read_flows_jsonl(rank_data, AttributeRegistry::defaults());
        auto set = build_training_set(samples, parse_provider(prov), parse_protocol(proto), parse_objective(obj),
                                      AttributeRegistry::defaults());
        if (set.data.size() == 0) throw Error("pipeline", "NoSamples", "no labeled flows for " + group);
        write_text(rank_out, rank_attributes(set.layout, set.data, group).to_csv());
        if (!fields_out.empty())
            write_text(fields_out, field_distribution_csv(field_distribution_report(set.layout, set.data)));
    } else if (*bankc) {
        std::vector<json> entries;
        const auto base = std::filesystem::absolute(manifest_out).parent_path();
        for (const auto& p : model_paths) {
            require_file(p);
            auto f = Forest::load(p);
            entries.push_back({{"provider", f.provider},
                               {"protocol", f.protocol},
                               {"objective", f.objective},
                               {"path", std::filesystem::relative(std::filesystem::absolute(p), base).string()}});
        }
        write_text(manifest_out, Bank::manifest(entries, bank_threshold).dump(2) + "\n");
    } else if (*classify) {
        require_file(cpcap);
        require_file(bank_path);
        Bank bank = Bank::load(bank_path);
        if (threshold >= 0) bank.set_threshold(threshold);
        auto os = open_out(cout_path);
        auto n = write_predictions_jsonl(cpcap, os, bank, cflags.config());
        info("classified " + std::to_string(n) + " flows");
    } else if (*report) {
        require_file(predictions);
        std::ifstream in(predictions);
        std::vector<SessionRecord> records;
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) records.push_back(SessionRecord::from_json(json::parse(line)));
        ReportOptions o;
        o.threshold = rthreshold;
        o.group_by = parse_group_by(group_by);
        o.utc_offset_s = static_cast<std::int64_t>(utc_offset_h * 3600);
        auto summary = write_reports(records, out_dir, o);
        info("excluded fraction " + std::to_string(summary["excluded_fraction"].get<double>()));
    }
    return 0;
}

void fail(const std::string& code, const std::string& message) {
    std::cerr << json{{"error", code}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        fail(e.qualified_code(), e.what());
    } catch (const json::exception& e) {
        fail("cli.BadJSON", e.what());
    } catch (const std::exception& e) {
        fail("cli.Internal", e.what());
    }
    return 2;
}
