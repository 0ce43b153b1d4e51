#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vidfp {

enum class Provider { None, YT, NF, DN, AP };
enum class Role { Unknown, Management, Content };

std::string_view to_string(Provider p);
std::string_view to_string(Role r);
/// Throws vidfp::Error("provider", "BadConfig") on unknown names.
Provider parse_provider(std::string_view s);
Role parse_role(std::string_view s);

struct ProviderPattern {
    std::string pattern;  // domain suffix; a leading '.' is ignored
    Provider provider = Provider::None;
    Role role = Role::Unknown;
    std::optional<int> port;  // restricts the match to one server port
};

/// Longest-suffix SNI matcher. Matching is case-insensitive and respects
/// label boundaries: "youtube.com" matches "www.youtube.com" but not
/// "notyoutube.com".
class ProviderTable {
public:
    ProviderTable() = default;
    explicit ProviderTable(std::vector<ProviderPattern> patterns);

    /// Four management domains plus googlevideo.com as YouTube content.
    static ProviderTable defaults();
    static ProviderTable from_json(std::string_view json_text);
    static ProviderTable load(const std::string& path);

    std::pair<Provider, Role> detect(std::string_view sni, int port) const;
    const std::vector<ProviderPattern>& patterns() const noexcept { return patterns_; }

private:
    std::vector<ProviderPattern> patterns_;
};

inline std::pair<Provider, Role> detect_provider(std::string_view sni, int port,
                                                 const ProviderTable& table) {
    return table.detect(sni, port);
}

const char* default_provider_config_json();

}  // namespace vidfp
