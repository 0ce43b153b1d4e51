#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace vidfp {

/// Encoded samples with integer class ids indexing `classes`.
struct Dataset {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::vector<std::string> classes;

    std::size_t size() const noexcept { return rows.size(); }
    std::size_t width() const noexcept { return rows.empty() ? 0 : rows.front().size(); }
    std::size_t class_count() const noexcept { return classes.size(); }

    /// Class ids follow the sorted order of the distinct names.
    static Dataset from_named(std::vector<std::vector<double>> rows, const std::vector<std::string>& names);
    Dataset subset(const std::vector<std::size_t>& idx) const;
};

}  // namespace vidfp
