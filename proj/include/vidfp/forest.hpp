#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vidfp/attributes.hpp"
#include "vidfp/dataset.hpp"

namespace vidfp {

struct TrainConfig {
    int n_trees = 100;
    int max_depth = 16;
    int n_attributes_per_split = 16;
    int min_samples_leaf = 1;
    std::uint64_t rng_seed = 1;
    /// Slots a split may use; empty means every slot. Attribute subsets are
    /// trained by masking the others out.
    std::vector<std::size_t> allowed_slots;
    /// 0 picks the hardware concurrency. Results do not depend on it.
    int threads = 0;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct TreeNode {
    int slot = -1;  // -1 marks a leaf
    double threshold = 0;  // go left when value <= threshold
    int left = -1, right = -1;
    std::vector<std::uint32_t> histogram;  // leaves only: training samples per class
};

struct Tree {
    std::vector<TreeNode> nodes;  // root first
    int depth() const;
    /// Leaf reached by `row`.
    const TreeNode& leaf(const std::vector<double>& row) const;
};

struct Prediction {
    int class_id = -1;
    std::string label;
    double confidence = 0;
    std::vector<double> distribution;  // vote fraction per class
};

struct Forest {
    static constexpr std::string_view kSchema = "vidfp.forest/1";

    std::vector<Tree> trees;
    std::vector<std::string> classes;
    TrainConfig config;
    std::size_t width = 0;
    std::string layout_fingerprint;
    std::string dict_version;
    bool degenerate = false;  // trained on a single class

    // Descriptive metadata carried through serialization.
    std::string provider;
    std::string protocol;
    std::string objective;
    std::optional<DictionaryStore> dictionaries;

    nlohmann::json to_json() const;
    std::string serialize() const;
    /// Throws forest.SchemaVersionMismatch or forest.BadModel.
    static Forest from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static Forest load(const std::string& path);
};

/// Throws forest.BadConfig for invalid settings and forest.BadData for empty
/// or ragged input. A single-class input yields a one-leaf forest flagged
/// `degenerate`.
Forest train(const Dataset& data, const TrainConfig& config);

/// Throws forest.LayoutMismatch when the vector width differs from training.
Prediction predict(const Forest& forest, const std::vector<double>& row);
Prediction predict(const Forest& forest, const AttributeVector& vector);

struct CvResult {
    double accuracy = 0;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    /// Rows scaled to sum to one (empty rows stay zero).
    std::vector<std::vector<double>> normalized_confusion() const;
};

/// Stratified k-fold. Throws forest.InsufficientClassSamples when a class has
/// fewer than k samples.
CvResult cross_validate(const Dataset& data, const TrainConfig& config, int k = 10, std::uint64_t seed = 1);

struct GridPoint {
    int max_depth = 0;
    int n_attributes = 0;
    double accuracy = 0;
};

struct GridResult {
    TrainConfig best;
    double best_accuracy = 0;
    std::vector<GridPoint> surface;
    std::string surface_csv() const;
};

/// Ties go to the smaller depth, then to fewer attributes.
GridResult grid_search(const Dataset& data, std::vector<int> depths, std::vector<int> n_attributes,
                       const TrainConfig& base, int k = 10, std::uint64_t seed = 1);

}  // namespace vidfp
