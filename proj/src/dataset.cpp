#include "vidfp/dataset.hpp"

#include <algorithm>
#include <map>

#include "vidfp/error.hpp"

namespace vidfp {

Dataset Dataset::from_named(std::vector<std::vector<double>> rows, const std::vector<std::string>& names) {
    if (rows.size() != names.size())
        throw Error("dataset", "LengthMismatch", "rows and labels differ in length");
    Dataset d;
    d.classes = names;
    std::sort(d.classes.begin(), d.classes.end());
    d.classes.erase(std::unique(d.classes.begin(), d.classes.end()), d.classes.end());
    std::map<std::string, int> id;
    for (std::size_t i = 0; i < d.classes.size(); ++i) id[d.classes[i]] = static_cast<int>(i);
    d.labels.reserve(names.size());
    for (const auto& n : names) d.labels.push_back(id[n]);
    d.rows = std::move(rows);
    return d;
}

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
    Dataset d;
    d.classes = classes;
    d.rows.reserve(idx.size());
    d.labels.reserve(idx.size());
    for (auto i : idx) {
        d.rows.push_back(rows[i]);
        d.labels.push_back(labels[i]);
    }
    return d;
}

}  // namespace vidfp
