#include "vidfp/provider.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "vidfp/embedded.hpp"
#include "vidfp/error.hpp"

namespace vidfp {

std::string_view to_string(Provider p) {
    switch (p) {
        case Provider::YT: return "YT";
        case Provider::NF: return "NF";
        case Provider::DN: return "DN";
        case Provider::AP: return "AP";
        case Provider::None: break;
    }
    return "None";
}

std::string_view to_string(Role r) {
    switch (r) {
        case Role::Management: return "management";
        case Role::Content: return "content";
        case Role::Unknown: break;
    }
    return "unknown";
}

Provider parse_provider(std::string_view s) {
    if (s == "YT") return Provider::YT;
    if (s == "NF") return Provider::NF;
    if (s == "DN") return Provider::DN;
    if (s == "AP") return Provider::AP;
    if (s == "None") return Provider::None;
    throw Error("provider", "BadConfig", "unknown provider '" + std::string(s) + "'");
}

Role parse_role(std::string_view s) {
    if (s == "management") return Role::Management;
    if (s == "content") return Role::Content;
    if (s == "unknown") return Role::Unknown;
    throw Error("provider", "BadConfig", "unknown role '" + std::string(s) + "'");
}

namespace {
std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool suffix_match(std::string_view host, std::string_view suffix) {
    if (suffix.empty()) return false;
    if (host == suffix) return true;
    return host.size() > suffix.size() && host.ends_with(suffix) &&
           host[host.size() - suffix.size() - 1] == '.';
}
}  // namespace

ProviderTable::ProviderTable(std::vector<ProviderPattern> patterns) : patterns_(std::move(patterns)) {
    for (auto& p : patterns_) {
        std::string s = lower(p.pattern);
        while (!s.empty() && s.front() == '.') s.erase(s.begin());
        while (!s.empty() && s.back() == '.') s.pop_back();
        p.pattern = s;
    }
}

ProviderTable ProviderTable::defaults() {
    return from_json(default_provider_config_json());
}

const char* default_provider_config_json() { return embedded::providers_json; }

ProviderTable ProviderTable::from_json(std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error("provider", "BadConfig", e.what());
    }
    if (!j.is_array()) throw Error("provider", "BadConfig", "provider config must be a JSON array");
    std::vector<ProviderPattern> out;
    for (const auto& e : j) {
        if (!e.contains("pattern") || !e.contains("provider"))
            throw Error("provider", "BadConfig", "entry needs 'pattern' and 'provider'");
        ProviderPattern p;
        p.pattern = e.at("pattern").get<std::string>();
        p.provider = parse_provider(e.at("provider").get<std::string>());
        p.role = parse_role(e.value("role", std::string("unknown")));
        if (e.contains("port")) p.port = e.at("port").get<int>();
        out.push_back(std::move(p));
    }
    return ProviderTable(std::move(out));
}

ProviderTable ProviderTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("provider", "IOError", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::pair<Provider, Role> ProviderTable::detect(std::string_view sni, int port) const {
    std::string host = lower(sni);
    while (!host.empty() && host.back() == '.') host.pop_back();
    const ProviderPattern* best = nullptr;
    for (const auto& p : patterns_) {
        if (p.port && *p.port != port) continue;
        if (!suffix_match(host, p.pattern)) continue;
        if (!best || p.pattern.size() > best->pattern.size()) best = &p;
    }
    if (!best) return {Provider::None, Role::Unknown};
    return {best->provider, best->role};
}

}  // namespace vidfp
