#include "vidfp/bank.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "vidfp/error.hpp"

namespace vidfp {

using nlohmann::json;

namespace {

const Objective kObjectives[] = {Objective::Platform, Objective::Device, Objective::Agent};

json labeled(const std::optional<LabeledConfidence>& v) {
    if (!v) return nullptr;
    return {{"label", v->label}, {"confidence", v->confidence}};
}

}  // namespace

Model Model::from_forest(Forest forest) {
    Model m;
    if (!forest.dictionaries) throw Error("bank", "StaleDictionary", "model carries no dictionaries");
    m.dicts = *forest.dictionaries;
    if (m.dicts.version() != forest.dict_version)
        throw Error("bank", "StaleDictionary", "dictionary version differs from the one recorded at training");
    m.objective = parse_objective(forest.objective);
    m.forest = std::move(forest);
    return m;
}

Prediction Model::classify(const HandshakeFieldSet& fields, const AttributeRegistry& registry) const {
    Encoder enc(registry, fields.protocol);
    return predict(forest, enc.encode(fields, dicts, EncodeMode::Infer));
}

const std::optional<Model>& ModelTriple::get(Objective o) const {
    switch (o) {
        case Objective::Platform: return platform;
        case Objective::Device: return device;
        case Objective::Agent: return agent;
    }
    return platform;
}

std::optional<Model>& ModelTriple::get(Objective o) {
    return const_cast<std::optional<Model>&>(static_cast<const ModelTriple&>(*this).get(o));
}

std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::Composite: return "composite";
        case Outcome::Partial: return "partial";
        case Outcome::Unknown: return "unknown";
    }
    return "unknown";
}

double CascadeResult::confidence() const {
    switch (outcome) {
        case Outcome::Composite: return platform->confidence;
        case Outcome::Partial:
            return std::max(device ? device->confidence : 0.0, agent ? agent->confidence : 0.0);
        case Outcome::Unknown: {
            double c = 0;
            for (const auto& [o, p] : predictions) c = std::max(c, p.confidence);
            return c;
        }
    }
    return 0;
}

json CascadeResult::to_json() const {
    json preds = json::object();
    for (const auto& [o, p] : predictions)
        preds[std::string(vidfp::to_string(o))] = {{"label", p.label}, {"confidence", p.confidence}};
    return {{"outcome", vidfp::to_string(outcome)}, {"confidence", confidence()},
            {"platform", labeled(platform)},          {"device", labeled(device)},
            {"agent", labeled(agent)},                {"models_evaluated", models_evaluated},
            {"predictions", preds}};
}

CascadeResult run_cascade(const std::function<Prediction(Objective)>& predict, double threshold) {
    CascadeResult r;
    auto run = [&](Objective o) -> const Prediction& {
        ++r.models_evaluated;
        return r.predictions[o] = predict(o);
    };
    const auto& composite = run(Objective::Platform);
    if (composite.confidence >= threshold) {
        r.outcome = Outcome::Composite;
        r.platform = LabeledConfidence{composite.label, composite.confidence};
        return r;
    }
    const auto& dev = run(Objective::Device);
    const auto& agt = run(Objective::Agent);
    if (dev.confidence >= threshold) r.device = LabeledConfidence{dev.label, dev.confidence};
    if (agt.confidence >= threshold) r.agent = LabeledConfidence{agt.label, agt.confidence};
    r.outcome = r.device || r.agent ? Outcome::Partial : Outcome::Unknown;
    return r;
}

void Bank::set_threshold(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw Error("bank", "BadConfig", "threshold must lie in [0, 1]");
    threshold_ = t;
}

void Bank::add(Provider provider, Protocol protocol, Model model) {
    auto& triple = models_[{provider, protocol}];
    triple.get(model.objective) = std::move(model);
}

const ModelTriple* Bank::find(Provider provider, Protocol protocol) const {
    auto it = models_.find({provider, protocol});
    return it == models_.end() ? nullptr : &it->second;
}

bool Bank::complete(Provider provider, Protocol protocol) const {
    const auto* t = find(provider, protocol);
    return t && t->platform && t->device && t->agent;
}

std::vector<std::pair<Provider, Protocol>> Bank::entries() const {
    std::vector<std::pair<Provider, Protocol>> out;
    for (const auto& [k, v] : models_)
        if (v.platform && v.device && v.agent) out.push_back(k);
    return out;
}

Bank Bank::load(const std::string& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw Error("bank", "IOError", "cannot open " + manifest_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("bank", "BadManifest", e.what());
    }
    if (j.value("schema", "") != kSchema)
        throw Error("bank", "SchemaVersionMismatch", "expected manifest schema " + std::string(kSchema));
    Bank bank;
    bank.set_threshold(j.value("threshold", kDefaultThreshold));
    const auto dir = std::filesystem::path(manifest_path).parent_path();
    try {
        for (const auto& m : j.at("models")) {
            std::filesystem::path p = m.at("path").get<std::string>();
            if (p.is_relative()) p = dir / p;
            Model model = Model::from_forest(Forest::load(p.string()));
            const auto provider = parse_provider(m.at("provider").get<std::string>());
            const auto protocol = parse_protocol(m.at("protocol").get<std::string>());
            const auto objective = parse_objective(m.at("objective").get<std::string>());
            if (objective != model.objective)
                throw Error("bank", "BadManifest", p.string() + " holds a " + model.forest.objective + " model");
            bank.add(provider, protocol, std::move(model));
        }
    } catch (const json::exception& e) {
        throw Error("bank", "BadManifest", e.what());
    }
    return bank;
}

json Bank::manifest(const std::vector<json>& models, double threshold) {
    return {{"schema", kSchema}, {"threshold", threshold}, {"models", models}};
}

CascadeResult classify_flow(const HandshakeFieldSet& fields, Provider provider, const Bank& bank) {
    const auto* triple = bank.find(provider, fields.protocol);
    if (!bank.complete(provider, fields.protocol))
        throw Error("bank", "MissingModel",
                    "no complete model set for " + std::string(to_string(provider)) + "/" +
                        std::string(to_string(fields.protocol)));
    return run_cascade([&](Objective o) { return triple->get(o)->classify(fields, bank.registry()); },
                       bank.threshold());
}

double median(std::vector<double> v) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

std::map<Objective, ObjectiveEvaluation> evaluate_open_set(const Bank& bank, const std::vector<HoldoutSample>& holdout) {
    std::map<Objective, ObjectiveEvaluation> out;
    std::map<Objective, std::vector<double>> good, bad;
    for (const auto& s : holdout) {
        const auto* triple = bank.find(s.provider, s.fields.protocol);
        if (!triple) throw Error("bank", "MissingModel", "holdout sample without a model");
        for (auto o : kObjectives) {
            const auto& m = triple->get(o);
            if (!m) continue;
            auto p = m->classify(s.fields, bank.registry());
            auto& ev = out[o];
            ++ev.count;
            if (p.label == objective_label(s.label, o)) {
                ++ev.correct;
                good[o].push_back(p.confidence);
            } else {
                bad[o].push_back(p.confidence);
            }
        }
    }
    for (auto& [o, ev] : out) {
        ev.accuracy = ev.count ? double(ev.correct) / double(ev.count) : 0.0;
        ev.median_confidence_correct = median(good[o]);
        ev.median_confidence_incorrect = median(bad[o]);
    }
    return out;
}

}  // namespace vidfp
