#include "vidfp/labels.hpp"

#include "vidfp/error.hpp"

namespace vidfp {

std::string_view to_string(Objective o) {
    switch (o) {
        case Objective::Platform: return "platform";
        case Objective::Device: return "device";
        case Objective::Agent: return "agent";
    }
    return "platform";
}

Objective parse_objective(std::string_view s) {
    if (s == "platform") return Objective::Platform;
    if (s == "device") return Objective::Device;
    if (s == "agent") return Objective::Agent;
    throw Error("labels", "BadObjective", "unknown objective '" + std::string(s) + "'");
}

std::string objective_label(const PlatformLabel& label, Objective objective) {
    switch (objective) {
        case Objective::Device: return label.os;
        case Objective::Agent: return label.agent;
        case Objective::Platform: break;
    }
    return label.platform();
}

}  // namespace vidfp
