#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "vidfp/attributes.hpp"
#include "vidfp/bytes.hpp"
#include "vidfp/dataset.hpp"
#include "vidfp/labels.hpp"
#include "vidfp/synth.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> n{0};
        path_ = std::filesystem::temp_directory_path() /
                ("vidfp-test-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline vidfp::Bytes hex(const std::string& s) { return vidfp::from_hex(s); }

/// Encodes synthetic samples straight from their template field sets.
inline vidfp::Dataset encode_samples(const std::vector<vidfp::SynthSample>& samples, vidfp::Protocol protocol,
                                     vidfp::Objective objective, vidfp::DictionaryStore& dicts) {
    vidfp::Encoder enc(vidfp::AttributeRegistry::defaults(), protocol);
    std::vector<std::vector<double>> rows;
    std::vector<std::string> names;
    for (const auto& s : samples) {
        rows.push_back(enc.encode(s.fields, dicts, vidfp::EncodeMode::Train).values);
        names.push_back(vidfp::objective_label(s.label, objective));
    }
    return vidfp::Dataset::from_named(std::move(rows), names);
}

}  // namespace testutil
