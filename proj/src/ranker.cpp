#include "vidfp/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <utility>

#include "vidfp/error.hpp"

namespace vidfp {

namespace {

// MI from (symbol id, class id) pairs with symbols already dense.
double mi_from_pairs(std::vector<std::pair<double, int>>& pairs) {
    const auto n = static_cast<double>(pairs.size());
    std::sort(pairs.begin(), pairs.end());
    std::map<int, std::size_t> class_count;
    for (const auto& p : pairs) ++class_count[p.second];

    double mi = 0;
    std::size_t i = 0;
    while (i < pairs.size()) {
        std::size_t j = i;
        while (j < pairs.size() && pairs[j].first == pairs[i].first) ++j;
        const auto cx = static_cast<double>(j - i);
        std::size_t k = i;
        while (k < j) {
            std::size_t m = k;
            while (m < j && pairs[m].second == pairs[k].second) ++m;
            const auto cxy = static_cast<double>(m - k);
            const auto cy = static_cast<double>(class_count[pairs[k].second]);
            mi += cxy / n * std::log2(cxy * n / (cx * cy));
            k = m;
        }
        i = j;
    }
    return std::max(0.0, mi);
}

}  // namespace

double mutual_information(const std::vector<double>& column, const std::vector<int>& labels) {
    if (column.size() != labels.size() || column.empty())
        throw Error("ranker", "LengthMismatch",
                    "column has " + std::to_string(column.size()) + " values, labels " + std::to_string(labels.size()));
    std::vector<std::pair<double, int>> pairs(column.size());
    for (std::size_t i = 0; i < column.size(); ++i) pairs[i] = {column[i], labels[i]};
    return mi_from_pairs(pairs);
}

std::vector<double> normalize(const std::vector<double>& raw) {
    double mx = 0;
    for (double v : raw) mx = std::max(mx, v);
    std::vector<double> out(raw.size(), 0.0);
    if (mx <= 0) return out;
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / mx;
    return out;
}

std::string_view to_string(ImportanceTier t) {
    switch (t) {
        case ImportanceTier::High: return "high";
        case ImportanceTier::Medium: return "medium";
        case ImportanceTier::Low: return "low";
    }
    return "low";
}

ImportanceTier tier_for(double score) {
    if (score > 0.2) return ImportanceTier::High;
    if (score >= 0.1) return ImportanceTier::Medium;
    return ImportanceTier::Low;
}

std::map<std::string, double> ImportanceReport::scores() const {
    std::map<std::string, double> out;
    for (const auto& a : attributes) out[a.label] = a.normalized;
    return out;
}

const AttributeImportance* ImportanceReport::find(std::string_view label) const {
    for (const auto& a : attributes)
        if (a.label == label) return &a;
    return nullptr;
}

std::string ImportanceReport::to_csv() const {
    std::ostringstream os;
    os << "attribute,raw_mi_bits,normalized,tier,cost\n";
    char buf[64];
    for (const auto& a : attributes) {
        os << a.label << ',';
        std::snprintf(buf, sizeof buf, "%.6f,%.6f", a.raw_mi_bits, a.normalized);
        os << buf << ',' << to_string(a.tier) << ',' << to_string(a.cost) << '\n';
    }
    return os.str();
}

ImportanceReport rank_attributes(const Layout& layout, const Dataset& data, std::string grouping) {
    ImportanceReport rep;
    rep.grouping = std::move(grouping);
    if (data.size() == 0) throw Error("ranker", "LengthMismatch", "empty dataset");
    if (data.width() != layout.width())
        throw Error("ranker", "LayoutMismatch", "dataset width does not match the layout");
    std::vector<double> raw;
    std::vector<std::pair<double, int>> pairs(data.size());
    for (std::size_t a = 0; a < layout.specs().size(); ++a) {
        const auto& r = layout.ranges()[a];
        double best = 0;
        for (std::size_t s = r.begin; s < r.begin + r.count; ++s) {
            for (std::size_t i = 0; i < data.size(); ++i) pairs[i] = {data.rows[i][s], data.labels[i]};
            best = std::max(best, mi_from_pairs(pairs));
        }
        raw.push_back(best);
    }
    auto norm = normalize(raw);
    for (std::size_t a = 0; a < layout.specs().size(); ++a)
        rep.attributes.push_back({layout.specs()[a]->label, raw[a], norm[a], tier_for(norm[a]), layout.specs()[a]->cost});
    return rep;
}

std::vector<FieldDistribution> field_distribution_report(const Layout& layout, const Dataset& data) {
    std::vector<FieldDistribution> out;
    const std::size_t k = data.class_count();
    for (std::size_t a = 0; a < layout.specs().size(); ++a) {
        const auto& r = layout.ranges()[a];
        using Tuple = std::vector<double>;
        std::map<Tuple, std::size_t> all;
        std::vector<std::map<Tuple, std::size_t>> per(k);
        std::vector<std::size_t> totals(k, 0);
        for (std::size_t i = 0; i < data.size(); ++i) {
            Tuple t(data.rows[i].begin() + static_cast<std::ptrdiff_t>(r.begin),
                    data.rows[i].begin() + static_cast<std::ptrdiff_t>(r.begin + r.count));
            ++per[data.labels[i]][t];
            ++totals[data.labels[i]];
            ++all[std::move(t)];
        }
        // Equal distributions: same support and proportional counts.
        auto same = [&](std::size_t x, std::size_t y) {
            if (per[x].size() != per[y].size()) return false;
            for (const auto& [t, c] : per[x]) {
                auto it = per[y].find(t);
                if (it == per[y].end() || c * totals[y] != it->second * totals[x]) return false;
            }
            return true;
        };
        std::size_t distinct = 0;
        for (std::size_t x = 0; x < k; ++x) {
            if (totals[x] == 0) continue;
            bool unique = true;
            for (std::size_t y = 0; y < k && unique; ++y)
                if (y != x && totals[y] > 0 && same(x, y)) unique = false;
            distinct += unique;
        }
        out.push_back({r.label, all.size(), distinct});
    }
    return out;
}

std::string field_distribution_csv(const std::vector<FieldDistribution>& rows) {
    std::ostringstream os;
    os << "attribute,unique_values,distinct_platforms\n";
    for (const auto& r : rows) os << r.label << ',' << r.unique_values << ',' << r.distinct_platforms << '\n';
    return os.str();
}

}  // namespace vidfp
