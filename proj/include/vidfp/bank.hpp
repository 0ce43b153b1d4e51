#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vidfp/attributes.hpp"
#include "vidfp/forest.hpp"
#include "vidfp/handshake.hpp"
#include "vidfp/labels.hpp"
#include "vidfp/provider.hpp"

namespace vidfp {

constexpr double kDefaultThreshold = 0.80;

/// One trained objective model together with the encoder state it expects.
struct Model {
    Forest forest;
    /// Only read: infer-mode encoding never adds entries.
    mutable DictionaryStore dicts;
    Objective objective = Objective::Platform;

    /// Throws bank.StaleDictionary when the dictionaries do not match the
    /// version recorded in the forest.
    static Model from_forest(Forest forest);
    Prediction classify(const HandshakeFieldSet& fields, const AttributeRegistry& registry) const;
};

struct ModelTriple {
    std::optional<Model> platform, device, agent;
    const std::optional<Model>& get(Objective o) const;
    std::optional<Model>& get(Objective o);
};

enum class Outcome { Composite, Partial, Unknown };
std::string_view to_string(Outcome o);

struct LabeledConfidence {
    std::string label;
    double confidence = 0;
};

struct CascadeResult {
    Outcome outcome = Outcome::Unknown;
    std::optional<LabeledConfidence> platform;  // Composite only
    std::optional<LabeledConfidence> device;    // Partial members
    std::optional<LabeledConfidence> agent;
    /// Predictions of every model that ran, keyed by objective.
    std::map<Objective, Prediction> predictions;
    int models_evaluated = 0;

    /// Confidence of what was reported: the composite, or the best Partial
    /// member, or the best of all Unknown predictions.
    double confidence() const;
    nlohmann::json to_json() const;
};

/// The inference order alone: composite first, then device and agent.
CascadeResult run_cascade(const std::function<Prediction(Objective)>& predict, double threshold = kDefaultThreshold);

class Bank {
public:
    static constexpr std::string_view kSchema = "vidfp.bank/1";

    double threshold() const noexcept { return threshold_; }
    void set_threshold(double t);

    void add(Provider provider, Protocol protocol, Model model);
    const ModelTriple* find(Provider provider, Protocol protocol) const;
    bool complete(Provider provider, Protocol protocol) const;
    /// (provider, protocol) pairs with all three objectives present.
    std::vector<std::pair<Provider, Protocol>> entries() const;

    /// Manifest `{schema, threshold, models: [{provider, protocol, objective, path}]}`;
    /// relative paths resolve against the manifest directory.
    static Bank load(const std::string& manifest_path);
    static nlohmann::json manifest(const std::vector<nlohmann::json>& models, double threshold = kDefaultThreshold);

    const AttributeRegistry& registry() const noexcept { return *registry_; }
    void set_registry(const AttributeRegistry& r) { registry_ = &r; }

private:
    std::map<std::pair<Provider, Protocol>, ModelTriple> models_;
    double threshold_ = kDefaultThreshold;
    const AttributeRegistry* registry_ = &AttributeRegistry::defaults();
};

/// Throws bank.MissingModel when (provider, protocol) lacks a model.
CascadeResult classify_flow(const HandshakeFieldSet& fields, Provider provider, const Bank& bank);

struct HoldoutSample {
    HandshakeFieldSet fields;
    Provider provider = Provider::None;
    PlatformLabel label;
};

struct ObjectiveEvaluation {
    std::size_t count = 0;
    double accuracy = 0;
    double median_confidence_correct = 0;
    double median_confidence_incorrect = 0;
    std::size_t correct = 0;
};

/// Runs each objective model directly on every holdout sample.
std::map<Objective, ObjectiveEvaluation> evaluate_open_set(const Bank& bank, const std::vector<HoldoutSample>& holdout);

double median(std::vector<double> v);

}  // namespace vidfp
