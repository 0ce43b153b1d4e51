#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace vidfp {

/// Exception carrying a module-qualified error code such as
/// "pcap.BadMagic" or "forest.DegenerateData".
class Error : public std::runtime_error {
public:
    Error(std::string module, std::string code, const std::string& message)
        : std::runtime_error(message), module_(std::move(module)), code_(std::move(code)) {}

    const std::string& module() const noexcept { return module_; }
    const std::string& code() const noexcept { return code_; }
    std::string qualified_code() const { return module_ + "." + code_; }

private:
    std::string module_;
    std::string code_;
};

}  // namespace vidfp
