#include "vidfp/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "vidfp/error.hpp"

namespace vidfp {

using nlohmann::json;

namespace {

constexpr std::int64_t kHourNs = 3600 * kNsPerSec;
constexpr std::int64_t kDayNs = 24 * kHourNs;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("report", "IOError", "cannot write " + p.string());
    out << text;
}

}  // namespace

SessionRecord SessionRecord::from_json(const json& j) {
    try {
        SessionRecord r;
        r.flow = j.at("client").get<std::string>() + ":" + std::to_string(j.at("client_port").get<int>()) + ">" +
                 j.at("server").get<std::string>() + ":" + std::to_string(j.at("server_port").get<int>());
        r.provider = parse_provider(j.at("provider").get<std::string>());
        r.protocol = parse_protocol(j.at("protocol").get<std::string>());
        const auto& t = j.at("telemetry");
        r.start_ns = t.at("first_ns").get<TimestampNs>();
        r.end_ns = t.at("last_ns").get<TimestampNs>();
        r.up_bytes = t.at("up_bytes").get<std::uint64_t>();
        r.down_bytes = t.at("down_bytes").get<std::uint64_t>();
        r.mean_down_mbps = t.value("mean_down_mbps", 0.0);
        r.peak_down_mbps = t.value("peak_down_mbps", 0.0);
        const json& c = j.at("cascade");
        const auto outcome = c.at("outcome").get<std::string>();
        r.outcome = outcome == "composite" ? Outcome::Composite
                    : outcome == "partial" ? Outcome::Partial
                                           : Outcome::Unknown;
        r.confidence = c.value("confidence", 0.0);
        auto label = [&](const char* k) -> std::string {
            return c.contains(k) && c.at(k).is_object() ? c.at(k).at("label").get<std::string>() : std::string();
        };
        if (r.outcome == Outcome::Composite) {
            const auto p = label("platform");
            const auto slash = p.find('/');
            r.os = p.substr(0, slash);
            r.agent = slash == std::string::npos ? std::string() : p.substr(slash + 1);
        } else if (r.outcome == Outcome::Partial) {
            r.os = label("device");
            r.agent = label("agent");
        }
        return r;
    } catch (const json::exception& e) {
        throw Error("report", "BadRecord", e.what());
    }
}

GroupBy parse_group_by(const std::string& spec) {
    GroupBy out;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty()) continue;
        if (part == "device") out.push_back(GroupField::Device);
        else if (part == "agent") out.push_back(GroupField::Agent);
        else if (part == "provider") out.push_back(GroupField::Provider);
        else throw Error("report", "BadGroup", "unknown group field '" + part + "'");
    }
    return out;
}

std::string group_key(const SessionRecord& r, const GroupBy& by) {
    if (by.empty()) return "all";
    std::string key;
    for (std::size_t i = 0; i < by.size(); ++i) {
        if (i) key += '|';
        switch (by[i]) {
            case GroupField::Device: key += r.os.empty() ? "unknown" : r.os; break;
            case GroupField::Agent: key += r.agent.empty() ? "unknown" : r.agent; break;
            case GroupField::Provider: key += to_string(r.provider); break;
        }
    }
    return key;
}

FilterResult filter_confident(const std::vector<SessionRecord>& records, double threshold) {
    FilterResult f;
    for (const auto& r : records) {
        if (r.confidence >= threshold) f.kept.push_back(r);
        else ++f.excluded;
    }
    f.excluded_fraction = records.empty() ? 0.0 : double(f.excluded) / double(records.size());
    return f;
}

std::map<std::string, double> watch_time(const std::vector<SessionRecord>& records, const GroupBy& by) {
    std::map<std::string, double> out;
    for (const auto& r : records) out[group_key(r, by)] += r.duration_s() / 3600.0;
    return out;
}

double quantile_sorted(const std::vector<double>& v, double p) {
    if (v.empty()) return 0;
    const double h = (static_cast<double>(v.size()) - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::map<std::string, Quartiles> bandwidth_stats(const std::vector<SessionRecord>& records, const GroupBy& by,
                                                 std::vector<std::string>* warnings) {
    std::map<std::string, std::vector<double>> samples;
    for (const auto& r : records) {
        auto& s = samples[group_key(r, by)];
        if (r.down_bytes > 0) s.push_back(r.mean_down_mbps);
    }
    std::map<std::string, Quartiles> out;
    for (auto& [g, v] : samples) {
        if (v.empty()) {
            if (warnings) warnings->push_back("report.EmptyGroup: " + g + " has no downstream throughput samples");
            continue;
        }
        std::sort(v.begin(), v.end());
        out[g] = {v.size(), quantile_sorted(v, 0.25), quantile_sorted(v, 0.5), quantile_sorted(v, 0.75)};
    }
    return out;
}

std::map<std::string, std::map<std::int64_t, HourBins>> hourly_volume(const std::vector<SessionRecord>& records,
                                                                      const GroupBy& by, std::int64_t utc_offset_s) {
    std::map<std::string, std::map<std::int64_t, HourBins>> out;
    const std::int64_t off = utc_offset_s * kNsPerSec;
    for (const auto& r : records) {
        auto& days = out[group_key(r, by)];
        const double volume = static_cast<double>(r.down_bytes);
        auto bin = [&](std::int64_t hour_index) -> double& {
            const std::int64_t day = floor_div(hour_index, 24);
            auto it = days.find(day);
            if (it == days.end()) it = days.emplace(day, HourBins{}).first;
            return it->second[static_cast<std::size_t>(hour_index - day * 24)];
        };
        const std::int64_t s = r.start_ns + off, e = std::max(r.end_ns, r.start_ns) + off;
        const std::int64_t first = floor_div(s, kHourNs), last = floor_div(e, kHourNs);
        if (e == s || first == last) {
            bin(first) += volume;
            continue;
        }
        // The final hour takes the remainder so the flow's volume is conserved.
        double assigned = 0;
        const double span = static_cast<double>(e - s);
        for (std::int64_t h = first; h < last; ++h) {
            const std::int64_t lo = std::max(s, h * kHourNs), hi = std::min(e, (h + 1) * kHourNs);
            const double share = volume * static_cast<double>(hi - lo) / span;
            bin(h) += share;
            assigned += share;
        }
        bin(last) += volume - assigned;
    }
    return out;
}

std::map<std::string, HourBins> hourly_usage(const std::vector<SessionRecord>& records, const GroupBy& by,
                                             std::int64_t utc_offset_s) {
    auto vol = hourly_volume(records, by, utc_offset_s);
    std::map<std::string, HourBins> out;
    if (records.empty()) return out;
    std::int64_t lo = INT64_MAX, hi = INT64_MIN;
    for (const auto& [g, days] : vol)
        for (const auto& [d, bins] : days) {
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
    for (const auto& [g, days] : vol) {
        HourBins med{};
        for (std::size_t h = 0; h < 24; ++h) {
            std::vector<double> v;
            for (std::int64_t d = lo; d <= hi; ++d) {
                auto it = days.find(d);
                v.push_back(it == days.end() ? 0.0 : it->second[h]);
            }
            med[h] = median(std::move(v));
        }
        out[g] = med;
    }
    return out;
}

std::string watch_time_csv(const std::map<std::string, double>& wt) {
    std::string s = "group,hours\n";
    for (const auto& [g, h] : wt) s += g + "," + fmt(h) + "\n";
    return s;
}

std::string bandwidth_csv(const std::map<std::string, Quartiles>& bw) {
    std::string s = "group,flows,q1_mbps,median_mbps,q3_mbps\n";
    for (const auto& [g, q] : bw)
        s += g + "," + std::to_string(q.count) + "," + fmt(q.q1) + "," + fmt(q.median) + "," + fmt(q.q3) + "\n";
    return s;
}

std::string hourly_csv(const std::map<std::string, HourBins>& hu) {
    std::string s = "group,hour,median_bytes\n";
    for (const auto& [g, bins] : hu)
        for (std::size_t h = 0; h < 24; ++h) s += g + "," + std::to_string(h) + "," + fmt(bins[h]) + "\n";
    return s;
}

json write_reports(const std::vector<SessionRecord>& records, const std::string& dir, const ReportOptions& options) {
    std::filesystem::create_directories(dir);
    auto f = filter_confident(records, options.threshold);
    std::vector<std::string> warnings;
    const std::filesystem::path d(dir);
    write_file(d / "watch_time.csv", watch_time_csv(watch_time(f.kept, options.group_by)));
    write_file(d / "bandwidth_quartiles.csv", bandwidth_csv(bandwidth_stats(f.kept, options.group_by, &warnings)));
    write_file(d / "hourly_usage.csv", hourly_csv(hourly_usage(f.kept, options.group_by, options.utc_offset_s)));
    json summary = {{"records", records.size()},
                    {"kept", f.kept.size()},
                    {"excluded", f.excluded},
                    {"excluded_fraction", f.excluded_fraction},
                    {"threshold", options.threshold},
                    {"utc_offset_s", options.utc_offset_s},
                    {"warnings", warnings}};
    write_file(d / "summary.json", summary.dump(2) + "\n");
    return summary;
}

}  // namespace vidfp
