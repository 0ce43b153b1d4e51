#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <string>

#include "vidfp/bytes.hpp"

namespace vidfp {

/// Nanoseconds since the Unix epoch.
using TimestampNs = std::int64_t;

constexpr TimestampNs kNsPerSec = 1'000'000'000;

enum class LinkType : std::uint32_t {
    Ethernet = 1,
    RawIP = 101,
};

struct PcapRecord {
    TimestampNs ts_ns = 0;
    std::uint32_t orig_len = 0;
    ByteSpan data;  // captured bytes; valid until the next call to next()
};

/// Streaming reader for classic libpcap files (microsecond and nanosecond
/// magics, either byte order). pcapng is not supported.
class PcapReader {
public:
    explicit PcapReader(const std::string& path);

    LinkType link_type() const noexcept { return link_type_; }
    bool nanosecond_resolution() const noexcept { return nanos_; }

    /// Returns false at a clean end of file. Throws pcap.TruncatedRecord when
    /// the file ends inside a record.
    bool next(PcapRecord& out);

private:
    std::uint32_t field(const std::uint8_t* p) const;

    std::ifstream in_;
    LinkType link_type_ = LinkType::Ethernet;
    bool swapped_ = false;
    bool nanos_ = false;
    std::uint32_t snaplen_ = 0;
    Bytes buf_;
};

class PcapWriter {
public:
    PcapWriter(const std::string& path, LinkType link, bool nanosecond = false,
               std::uint32_t snaplen = 65535);

    /// `orig_len` defaults to data.size(); data is truncated to the snaplen.
    void write(TimestampNs ts, ByteSpan data, std::uint32_t orig_len = 0);
    void flush() { out_.flush(); }
    std::uint64_t records_written() const noexcept { return count_; }

private:
    std::ofstream out_;
    bool nanos_;
    std::uint32_t snaplen_;
    std::uint64_t count_ = 0;
};

}  // namespace vidfp
