#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "vidfp/bank.hpp"
#include "vidfp/flow.hpp"
#include "vidfp/pcap.hpp"

namespace vidfp {

struct SessionRecord {
    std::string flow;  // client:port>server:port
    Provider provider = Provider::None;
    Protocol protocol = Protocol::TCP;
    Outcome outcome = Outcome::Unknown;
    std::string os;     // empty when not reported
    std::string agent;
    double confidence = 0;
    TimestampNs start_ns = 0, end_ns = 0;
    std::uint64_t up_bytes = 0, down_bytes = 0;
    double mean_down_mbps = 0, peak_down_mbps = 0;

    double duration_s() const { return static_cast<double>(end_ns - start_ns) / kNsPerSec; }

    /// Reads one predictions-JSONL object. Throws report.BadRecord.
    static SessionRecord from_json(const nlohmann::json& j);
};

enum class GroupField { Device, Agent, Provider };
using GroupBy = std::vector<GroupField>;
/// Comma-separated subset of device, agent, provider. Throws report.BadGroup.
GroupBy parse_group_by(const std::string& spec);
/// Fields joined by '|'; missing labels read "unknown", an empty GroupBy gives "all".
std::string group_key(const SessionRecord& r, const GroupBy& by);

struct FilterResult {
    std::vector<SessionRecord> kept;
    std::size_t excluded = 0;
    double excluded_fraction = 0;
};

FilterResult filter_confident(const std::vector<SessionRecord>& records, double threshold);

/// Summed flow durations per group, in hours.
std::map<std::string, double> watch_time(const std::vector<SessionRecord>& records, const GroupBy& by);

struct Quartiles {
    std::size_t count = 0;
    double q1 = 0, median = 0, q3 = 0;
};

/// Linear interpolation between order statistics at (n-1)p; needs sorted input.
double quantile_sorted(const std::vector<double>& sorted, double p);

/// Mean downstream throughput quartiles. Flows without downstream bytes carry
/// no throughput sample; groups left empty are skipped and named in `warnings`.
std::map<std::string, Quartiles> bandwidth_stats(const std::vector<SessionRecord>& records, const GroupBy& by,
                                                 std::vector<std::string>* warnings = nullptr);

using HourBins = std::array<double, 24>;

/// Downstream bytes per local day and hour, spread pro rata over each flow's
/// span. Day numbers count from the Unix epoch in local time.
std::map<std::string, std::map<std::int64_t, HourBins>> hourly_volume(const std::vector<SessionRecord>& records,
                                                                      const GroupBy& by, std::int64_t utc_offset_s = 0);

/// Per-hour median over every day between the first and last active day of
/// the whole record set; days without traffic count as zero.
std::map<std::string, HourBins> hourly_usage(const std::vector<SessionRecord>& records, const GroupBy& by,
                                             std::int64_t utc_offset_s = 0);

std::string watch_time_csv(const std::map<std::string, double>& wt);
std::string bandwidth_csv(const std::map<std::string, Quartiles>& bw);
std::string hourly_csv(const std::map<std::string, HourBins>& hu);

struct ReportOptions {
    double threshold = kDefaultThreshold;
    GroupBy group_by = {GroupField::Provider, GroupField::Device, GroupField::Agent};
    std::int64_t utc_offset_s = 0;
};

/// Writes watch_time.csv, bandwidth_quartiles.csv, hourly_usage.csv and
/// summary.json into `dir`; returns the summary.
nlohmann::json write_reports(const std::vector<SessionRecord>& records, const std::string& dir,
                             const ReportOptions& options);

}  // namespace vidfp
