#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vidfp {

using Bytes = std::vector<std::uint8_t>;
using ByteSpan = std::span<const std::uint8_t>;

/// Thrown by ByteReader when a read runs past the end of its buffer.
struct OutOfBounds {
    std::size_t offset;
};

/// Big-endian cursor over an immutable byte span.
class ByteReader {
public:
    explicit ByteReader(ByteSpan data, std::size_t base_offset = 0)
        : data_(data), base_(base_offset) {}

    std::size_t offset() const noexcept { return base_ + pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool empty() const noexcept { return pos_ >= data_.size(); }

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u24();
    std::uint32_t u32();
    std::uint64_t uint(std::size_t width);
    /// QUIC variable-length integer as in RFC 9000.
    std::uint64_t varint();
    ByteSpan take(std::size_t n);
    void skip(std::size_t n) { take(n); }
    /// Reads an N-byte length prefix and returns a reader over that many bytes.
    ByteReader sub(std::size_t len_width);

private:
    void need(std::size_t n) const;

    ByteSpan data_;
    std::size_t base_ = 0;
    std::size_t pos_ = 0;
};

/// Big-endian append-only writer.
class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v);
    void u24(std::uint32_t v);
    void u32(std::uint32_t v);
    void uint(std::uint64_t v, std::size_t width);
    /// Minimal-length QUIC varint unless `width` (1, 2, 4 or 8) is forced.
    void varint(std::uint64_t v, std::size_t width = 0);
    void bytes(ByteSpan b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
    void zeros(std::size_t n) { out_.insert(out_.end(), n, 0); }

    /// Writes `body` prefixed by its length in `len_width` bytes.
    void prefixed(std::size_t len_width, ByteSpan body);

    std::size_t size() const noexcept { return out_.size(); }
    Bytes& buffer() noexcept { return out_; }
    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

std::size_t varint_size(std::uint64_t v);

std::string to_hex(ByteSpan b);
/// Accepts an optional "0x" prefix; throws std::invalid_argument on bad input.
Bytes from_hex(std::string_view hex);

std::uint16_t load_be16(const std::uint8_t* p);
std::uint32_t load_be32(const std::uint8_t* p);

}  // namespace vidfp
