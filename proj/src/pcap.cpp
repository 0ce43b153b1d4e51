#include "vidfp/pcap.hpp"

#include <algorithm>
#include <array>

#include "vidfp/error.hpp"

namespace vidfp {

namespace {
constexpr std::uint32_t kMagicMicros = 0xa1b2c3d4;
constexpr std::uint32_t kMagicNanos = 0xa1b23c4d;

std::uint32_t byteswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00) | ((v << 8) & 0xff0000) | (v << 24);
}

std::uint32_t load_le32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

void store_le32(std::uint8_t* p, std::uint32_t v) {
    p[0] = static_cast<std::uint8_t>(v);
    p[1] = static_cast<std::uint8_t>(v >> 8);
    p[2] = static_cast<std::uint8_t>(v >> 16);
    p[3] = static_cast<std::uint8_t>(v >> 24);
}
}  // namespace

PcapReader::PcapReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error("pcap", "IOError", "cannot open " + path);
    std::array<std::uint8_t, 24> hdr{};
    in_.read(reinterpret_cast<char*>(hdr.data()), hdr.size());
    if (in_.gcount() < 4) throw Error("pcap", "BadMagic", path + ": file too short for a pcap header");
    std::uint32_t magic = load_le32(hdr.data());
    if (magic == kMagicMicros || magic == kMagicNanos) {
        swapped_ = false;
    } else if (byteswap32(magic) == kMagicMicros || byteswap32(magic) == kMagicNanos) {
        swapped_ = true;
        magic = byteswap32(magic);
    } else {
        throw Error("pcap", "BadMagic", path + ": unrecognized pcap magic");
    }
    if (in_.gcount() != static_cast<std::streamsize>(hdr.size()))
        throw Error("pcap", "TruncatedRecord", path + ": truncated global header");
    nanos_ = magic == kMagicNanos;
    snaplen_ = field(hdr.data() + 16);
    link_type_ = static_cast<LinkType>(field(hdr.data() + 20) & 0x0fffffff);
    buf_.reserve(snaplen_ > 0 && snaplen_ < (1u << 20) ? snaplen_ : 65535);
}

std::uint32_t PcapReader::field(const std::uint8_t* p) const {
    std::uint32_t v = load_le32(p);
    return swapped_ ? byteswap32(v) : v;
}

bool PcapReader::next(PcapRecord& out) {
    std::array<std::uint8_t, 16> rec{};
    in_.read(reinterpret_cast<char*>(rec.data()), rec.size());
    auto got = in_.gcount();
    if (got == 0) return false;
    if (got != static_cast<std::streamsize>(rec.size()))
        throw Error("pcap", "TruncatedRecord", "truncated record header");
    std::uint32_t sec = field(rec.data());
    std::uint32_t frac = field(rec.data() + 4);
    std::uint32_t caplen = field(rec.data() + 8);
    std::uint32_t origlen = field(rec.data() + 12);
    if (caplen > (1u << 26)) throw Error("pcap", "TruncatedRecord", "implausible record length");
    buf_.resize(caplen);
    in_.read(reinterpret_cast<char*>(buf_.data()), caplen);
    if (in_.gcount() != static_cast<std::streamsize>(caplen))
        throw Error("pcap", "TruncatedRecord", "truncated record body");
    out.ts_ns = static_cast<TimestampNs>(sec) * kNsPerSec +
                (nanos_ ? static_cast<TimestampNs>(frac) : static_cast<TimestampNs>(frac) * 1000);
    out.orig_len = origlen;
    out.data = ByteSpan(buf_.data(), buf_.size());
    return true;
}

PcapWriter::PcapWriter(const std::string& path, LinkType link, bool nanosecond, std::uint32_t snaplen)
    : out_(path, std::ios::binary | std::ios::trunc), nanos_(nanosecond), snaplen_(snaplen) {
    if (!out_) throw Error("pcap", "IOError", "cannot create " + path);
    std::array<std::uint8_t, 24> hdr{};
    store_le32(hdr.data(), nanos_ ? kMagicNanos : kMagicMicros);
    hdr[4] = 2;  // version 2.4
    hdr[6] = 4;
    store_le32(hdr.data() + 16, snaplen_);
    store_le32(hdr.data() + 20, static_cast<std::uint32_t>(link));
    out_.write(reinterpret_cast<const char*>(hdr.data()), hdr.size());
}

void PcapWriter::write(TimestampNs ts, ByteSpan data, std::uint32_t orig_len) {
    auto caplen = static_cast<std::uint32_t>(std::min<std::size_t>(data.size(), snaplen_));
    if (orig_len == 0) orig_len = static_cast<std::uint32_t>(data.size());
    std::array<std::uint8_t, 16> rec{};
    store_le32(rec.data(), static_cast<std::uint32_t>(ts / kNsPerSec));
    auto frac = ts % kNsPerSec;
    store_le32(rec.data() + 4, static_cast<std::uint32_t>(nanos_ ? frac : frac / 1000));
    store_le32(rec.data() + 8, caplen);
    store_le32(rec.data() + 12, orig_len);
    out_.write(reinterpret_cast<const char*>(rec.data()), rec.size());
    out_.write(reinterpret_cast<const char*>(data.data()), caplen);
    if (!out_) throw Error("pcap", "IOError", "write failed");
    ++count_;
}

}  // namespace vidfp
