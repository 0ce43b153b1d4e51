#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "vidfp/error.hpp"
#include "vidfp/report.hpp"

using namespace vidfp;
using testutil::TempDir;

namespace {

constexpr TimestampNs kMidnight = 19675LL * 86400 * kNsPerSec;  // a UTC midnight
constexpr TimestampNs kHour = 3600 * kNsPerSec;

SessionRecord rec(TimestampNs start, TimestampNs end, std::uint64_t down, std::string os = "Windows",
                  std::string agent = "Chrome", double conf = 1.0, double mbps = 1.0) {
    SessionRecord r;
    r.provider = Provider::YT;
    r.outcome = Outcome::Composite;
    r.os = std::move(os);
    r.agent = std::move(agent);
    r.confidence = conf;
    r.start_ns = start;
    r.end_ns = end;
    r.down_bytes = down;
    r.mean_down_mbps = mbps;
    return r;
}

double bins_sum(const HourBins& b) { return std::accumulate(b.begin(), b.end(), 0.0); }

}  // namespace

TEST_CASE("report: quartiles by linear interpolation") {
    std::vector<double> v{1, 2, 3, 4, 5};
    CHECK(quantile_sorted(v, 0.5) == 3);
    CHECK(quantile_sorted(v, 0.25) == 2);
    CHECK(quantile_sorted(v, 0.75) == 4);
    std::vector<double> one{7.5};
    for (double p : {0.25, 0.5, 0.75}) CHECK(quantile_sorted(one, p) == 7.5);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> x(1 + rng() % 30);
        for (auto& e : x) e = static_cast<double>(rng() % 1000) / 10;
        auto s = x;
        std::sort(s.begin(), s.end());
        for (double p : {0.25, 0.5, 0.75}) CHECK(quantile_sorted(s, p) == doctest::Approx(oracle::quantile(x, p)));
    }
}

TEST_CASE("report: bandwidth stats per group") {
    std::vector<SessionRecord> rs;
    for (int i = 1; i <= 5; ++i) rs.push_back(rec(0, kNsPerSec, 100, "Windows", "Chrome", 1, i));
    rs.push_back(rec(0, kNsPerSec, 100, "iOS", "Safari", 1, 9));
    rs.push_back(rec(0, kNsPerSec, 0, "Windows", "Chrome", 1, 0));  // no downstream sample
    rs.push_back(rec(0, kNsPerSec, 0, "Android", "Chrome", 1, 0));
    std::vector<std::string> warn;
    auto bw = bandwidth_stats(rs, {GroupField::Device}, &warn);
    CHECK(bw.at("Windows").count == 5);
    CHECK(bw.at("Windows").q1 == 2);
    CHECK(bw.at("Windows").median == 3);
    CHECK(bw.at("Windows").q3 == 4);
    CHECK(bw.at("iOS").median == 9);
    CHECK_FALSE(bw.count("Android"));
    REQUIRE(warn.size() == 1);
    CHECK(warn[0].rfind("report.EmptyGroup", 0) == 0);
    CHECK(bandwidth_csv(bw).rfind("group,flows,q1_mbps,median_mbps,q3_mbps\n", 0) == 0);
}

TEST_CASE("report: watch time") {
    std::vector<SessionRecord> one{rec(kMidnight, kMidnight + kHour, 10)};
    CHECK(watch_time(one, {}).at("all") == 1.0);

    std::vector<SessionRecord> rs{rec(0, 1800 * kNsPerSec, 1, "Windows", "Chrome"),
                                  rec(0, 5400 * kNsPerSec, 1, "Windows", "Firefox"),
                                  rec(0, 3600 * kNsPerSec, 1, "Android", "Chrome"),
                                  rec(0, 3600 * kNsPerSec, 1, "", "")};
    auto by_agent = watch_time(rs, {GroupField::Device, GroupField::Agent});
    CHECK(by_agent.at("Windows|Chrome") == 0.5);
    CHECK(by_agent.at("Windows|Firefox") == 1.5);
    CHECK(by_agent.at("unknown|unknown") == 1.0);
    auto by_os = watch_time(rs, {GroupField::Device});
    CHECK(by_os.at("Windows") == 2.0);
    double parts = 0;
    for (const auto& [g, h] : by_agent) parts += h;
    CHECK(parts == watch_time(rs, {}).at("all"));
    CHECK(watch_time_csv(by_os) == "group,hours\nAndroid,1.000000\nWindows,2.000000\nunknown,1.000000\n");

    // Equal totals in two groups give equal outputs.
    std::vector<SessionRecord> eq{rec(0, kHour, 1, "A", "x"), rec(0, kHour, 1, "B", "x")};
    auto w = watch_time(eq, {GroupField::Device});
    CHECK(w.at("A") == w.at("B"));
}

TEST_CASE("report: hourly volume placement") {
    auto in20 = rec(kMidnight + 20 * kHour + 60 * kNsPerSec, kMidnight + 20 * kHour + 1800 * kNsPerSec, 1000);
    auto v = hourly_volume({in20}, {});
    const auto& day = v.at("all").begin()->second;
    CHECK(day[20] == 1000);
    CHECK(bins_sum(day) == 1000);

    auto split = rec(kMidnight + 19 * kHour + 1800 * kNsPerSec, kMidnight + 20 * kHour + 1800 * kNsPerSec, 1000);
    auto s = hourly_volume({split}, {}).at("all").begin()->second;
    CHECK(s[19] == 500);
    CHECK(s[20] == 500);

    // A two-hour offset moves the same flow to local hours 21 and 22.
    auto shifted = hourly_volume({split}, {}, 2 * 3600).at("all").begin()->second;
    CHECK(shifted[21] == 500);
    CHECK(shifted[22] == 500);
}

TEST_CASE("report: flows crossing midnight split across days") {
    auto r = rec(kMidnight + 23 * kHour, kMidnight + 25 * kHour, 2000);
    auto v = hourly_volume({r}, {}).at("all");
    REQUIRE(v.size() == 2);
    CHECK(v.begin()->second[23] == 1000);
    CHECK(std::next(v.begin())->second[0] == 1000);
}

TEST_CASE("report: planted evening peak over a week") {
    std::vector<SessionRecord> rs;
    std::mt19937_64 rng(4);
    for (int d = 0; d < 7; ++d) {
        for (int h = 0; h < 24; ++h) {
            std::uint64_t bytes = h == 20 ? 50'000 : 1'000 + rng() % 9'000;
            TimestampNs start = kMidnight + d * 24 * kHour + h * kHour + 600 * kNsPerSec;
            rs.push_back(rec(start, start + 1200 * kNsPerSec, bytes));
        }
    }
    auto hu = hourly_usage(rs, {}).at("all");
    CHECK(std::max_element(hu.begin(), hu.end()) - hu.begin() == 20);
    CHECK(hu[20] == 50'000);
}

TEST_CASE("report: median runs over every day of the record span") {
    // Group A is active on day 0 only, group B on days 0..2: A's median is 0.
    std::vector<SessionRecord> rs{rec(kMidnight + 20 * kHour, kMidnight + 20 * kHour + 60 * kNsPerSec, 900, "A"),
                                  rec(kMidnight + 20 * kHour, kMidnight + 20 * kHour + 60 * kNsPerSec, 100, "B"),
                                  rec(kMidnight + 44 * kHour, kMidnight + 44 * kHour + 60 * kNsPerSec, 200, "B"),
                                  rec(kMidnight + 68 * kHour, kMidnight + 68 * kHour + 60 * kNsPerSec, 300, "B")};
    auto hu = hourly_usage(rs, {GroupField::Device});
    CHECK(hu.at("A")[20] == 0);
    CHECK(hu.at("B")[20] == 200);
    CHECK(hourly_csv(hu).rfind("group,hour,median_bytes\nA,0,0.000000\n", 0) == 0);
}

TEST_CASE("report: volume conservation on random corpora") {
    std::mt19937_64 rng(31);
    for (int run = 0; run < 50; ++run) {
        std::vector<SessionRecord> rs;
        std::map<std::string, double> expect_total;
        std::map<std::pair<std::string, std::int64_t>, double> expect_day;
        const char* oses[] = {"Windows", "iOS", "Android"};
        for (int i = 0; i < 40; ++i) {
            std::string os = oses[rng() % 3];
            TimestampNs start = kMidnight + static_cast<TimestampNs>(rng() % (5 * 86400)) * kNsPerSec;
            TimestampNs dur = static_cast<TimestampNs>(rng() % 20000) * kNsPerSec + static_cast<TimestampNs>(rng() % kNsPerSec);
            std::uint64_t bytes = rng() % 100'000'000;
            rs.push_back(rec(start, start + dur, bytes, os));
            expect_total[os] += static_cast<double>(bytes);
            const std::int64_t d0 = start / (86400 * kNsPerSec), d1 = (start + dur) / (86400 * kNsPerSec);
            if (d0 == d1) expect_day[{os, d0}] += static_cast<double>(bytes);
            else expect_day[{os, -1}] = 1;  // mark the group/day as mixed
        }
        auto v = hourly_volume(rs, {GroupField::Device});
        for (const auto& [g, days] : v) {
            double sum = 0;
            for (const auto& [d, bins] : days) {
                sum += bins_sum(bins);
                auto it = expect_day.find({g, d});
                bool mixed = expect_day.count({g, -1}) > 0;
                if (!mixed && it != expect_day.end()) CHECK(bins_sum(bins) == doctest::Approx(it->second).epsilon(1e-12));
            }
            CHECK(sum == doctest::Approx(expect_total[g]).epsilon(1e-12));
        }
    }
}

TEST_CASE("report: confidence filter") {
    std::vector<SessionRecord> all_sure(10, rec(0, 1, 1));
    auto f = filter_confident(all_sure, 0.8);
    CHECK(f.excluded == 0);
    CHECK(f.excluded_fraction == 0.0);
    std::vector<SessionRecord> mixed;
    for (int i = 0; i < 10; ++i) mixed.push_back(rec(0, 1, 1, "Windows", "Chrome", i < 2 ? 0.5 : 0.9));
    auto g = filter_confident(mixed, 0.8);
    CHECK(g.excluded == 2);
    CHECK(g.excluded_fraction == doctest::Approx(0.2));
    CHECK(g.kept.size() == 8);
}

TEST_CASE("report: records from prediction lines") {
    auto j = nlohmann::json::parse(R"({
        "client": "10.0.0.1", "client_port": 50000, "server": "10.9.0.1", "server_port": 443,
        "protocol": "QUIC", "provider": "YT",
        "telemetry": {"first_ns": 10, "last_ns": 3600000000010, "up_bytes": 5, "down_bytes": 9,
                      "mean_down_mbps": 1.5, "peak_down_mbps": 2.5},
        "cascade": {"outcome": "composite", "confidence": 0.9,
                    "platform": {"label": "Android TV/Native app", "confidence": 0.9},
                    "device": null, "agent": null}})");
    auto r = SessionRecord::from_json(j);
    CHECK(r.os == "Android TV");
    CHECK(r.agent == "Native app");
    CHECK(r.duration_s() == 3600.0);
    CHECK(r.flow == "10.0.0.1:50000>10.9.0.1:443");
    j["cascade"] = {{"outcome", "partial"}, {"confidence", 0.85}, {"device", {{"label", "iOS"}, {"confidence", 0.85}}},
                    {"agent", nullptr}};
    auto p = SessionRecord::from_json(j);
    CHECK(p.os == "iOS");
    CHECK(p.agent.empty());
    CHECK(group_key(p, {GroupField::Provider, GroupField::Device, GroupField::Agent}) == "YT|iOS|unknown");
    j.erase("telemetry");
    bool bad = false;
    try {
        SessionRecord::from_json(j);
    } catch (const Error& e) {
        bad = e.qualified_code() == "report.BadRecord";
    }
    CHECK(bad);
}

TEST_CASE("report: group-by parsing") {
    CHECK(parse_group_by("device,agent") == GroupBy{GroupField::Device, GroupField::Agent});
    CHECK(parse_group_by("").empty());
    bool bad = false;
    try {
        parse_group_by("colour");
    } catch (const Error& e) {
        bad = e.qualified_code() == "report.BadGroup";
    }
    CHECK(bad);
}

TEST_CASE("report: report files") {
    TempDir dir;
    std::vector<SessionRecord> rs{rec(kMidnight, kMidnight + kHour, 1000, "Windows", "Chrome", 0.9),
                                  rec(kMidnight, kMidnight + kHour, 1000, "iOS", "Safari", 0.3)};
    ReportOptions opt;
    auto s = write_reports(rs, dir.file("out"), opt);
    CHECK(s["records"] == 2);
    CHECK(s["kept"] == 1);
    CHECK(s["excluded_fraction"] == 0.5);
    for (const char* f : {"watch_time.csv", "bandwidth_quartiles.csv", "hourly_usage.csv", "summary.json"})
        CHECK(std::filesystem::exists(dir.path() / "out" / f));
    std::ifstream in(dir.path() / "out" / "watch_time.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "group,hours\nYT|Windows|Chrome,1.000000\n");
}
