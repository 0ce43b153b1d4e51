#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vidfp/attributes.hpp"
#include "vidfp/dataset.hpp"

namespace vidfp {

/// Plug-in mutual information in bits between a discrete column and class
/// ids. Throws ranker.LengthMismatch when the lengths differ or are zero.
double mutual_information(const std::vector<double>& column, const std::vector<int>& labels);

/// Divides by the maximum; an all-zero input stays all zero.
std::vector<double> normalize(const std::vector<double>& raw);

enum class ImportanceTier { High, Medium, Low };
std::string_view to_string(ImportanceTier t);
/// High above 0.2, medium in [0.1, 0.2], low below 0.1.
ImportanceTier tier_for(double score);

struct AttributeImportance {
    std::string label;
    double raw_mi_bits = 0;
    double normalized = 0;
    ImportanceTier tier = ImportanceTier::Low;
    CostTier cost = CostTier::Low;
};

struct ImportanceReport {
    std::string grouping;  // provider/protocol/objective
    std::vector<AttributeImportance> attributes;  // layout order

    std::map<std::string, double> scores() const;
    const AttributeImportance* find(std::string_view label) const;
    /// `attribute,raw_mi_bits,normalized,tier,cost`
    std::string to_csv() const;
};

/// List attributes score the maximum of their per-slot MI values.
ImportanceReport rank_attributes(const Layout& layout, const Dataset& data, std::string grouping = {});

struct FieldDistribution {
    std::string label;
    std::size_t unique_values = 0;
    /// Platforms whose value distribution differs from every other platform's.
    std::size_t distinct_platforms = 0;
};

/// Each attribute's slot tuple counts as one value.
std::vector<FieldDistribution> field_distribution_report(const Layout& layout, const Dataset& data);
std::string field_distribution_csv(const std::vector<FieldDistribution>& rows);

}  // namespace vidfp
