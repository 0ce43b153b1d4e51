#pragma once

#include <string>
#include <string_view>

namespace vidfp {

/// One row of the platform roster: device class, OS and software agent.
struct PlatformLabel {
    std::string device;  // PC, Mobile, TV
    std::string os;      // Windows, macOS, Android, iOS, Android TV, PlayStation
    std::string agent;   // Chrome, Edge, Firefox, Safari, Samsung Internet, Native app

    std::string platform() const { return os + "/" + agent; }
    bool operator==(const PlatformLabel&) const = default;
};

/// The three prediction targets: the composite user platform, the device
/// (identified by its OS) and the software agent.
enum class Objective { Platform, Device, Agent };

std::string_view to_string(Objective o);
Objective parse_objective(std::string_view s);

/// Class name of `label` under `objective`.
std::string objective_label(const PlatformLabel& label, Objective objective);

}  // namespace vidfp
