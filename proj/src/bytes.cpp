#include "vidfp/bytes.hpp"

#include <stdexcept>

namespace vidfp {

void ByteReader::need(std::size_t n) const {
    if (n > remaining()) throw OutOfBounds{offset()};
}

std::uint8_t ByteReader::u8() {
    need(1);
    return data_[pos_++];
}

std::uint16_t ByteReader::u16() {
    need(2);
    std::uint16_t v = load_be16(data_.data() + pos_);
    pos_ += 2;
    return v;
}

std::uint32_t ByteReader::u24() {
    need(3);
    const auto* p = data_.data() + pos_;
    pos_ += 3;
    return (std::uint32_t(p[0]) << 16) | (std::uint32_t(p[1]) << 8) | p[2];
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = load_be32(data_.data() + pos_);
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::uint(std::size_t width) {
    need(width);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += width;
    return v;
}

std::uint64_t ByteReader::varint() {
    need(1);
    std::size_t len = std::size_t{1} << (data_[pos_] >> 6);
    need(len);
    std::uint64_t v = data_[pos_] & 0x3f;
    for (std::size_t i = 1; i < len; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += len;
    return v;
}

ByteSpan ByteReader::take(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
}

ByteReader ByteReader::sub(std::size_t len_width) {
    auto len = static_cast<std::size_t>(uint(len_width));
    std::size_t at = offset();
    return ByteReader(take(len), at);
}

void ByteWriter::u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
}

void ByteWriter::u24(std::uint32_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 16));
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
}

void ByteWriter::u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v));
}

void ByteWriter::uint(std::uint64_t v, std::size_t width) {
    for (std::size_t i = width; i-- > 0;) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::size_t varint_size(std::uint64_t v) {
    if (v < (1ull << 6)) return 1;
    if (v < (1ull << 14)) return 2;
    if (v < (1ull << 30)) return 4;
    if (v < (1ull << 62)) return 8;
    throw std::out_of_range("varint value exceeds 2^62");
}

void ByteWriter::varint(std::uint64_t v, std::size_t width) {
    std::size_t len = width == 0 ? varint_size(v) : width;
    if (len < varint_size(v)) throw std::out_of_range("varint does not fit forced width");
    std::uint8_t prefix = 0;
    switch (len) {
        case 1: prefix = 0x00; break;
        case 2: prefix = 0x40; break;
        case 4: prefix = 0x80; break;
        case 8: prefix = 0xc0; break;
        default: throw std::invalid_argument("varint width must be 1, 2, 4 or 8");
    }
    std::size_t start = out_.size();
    uint(v, len);
    out_[start] |= prefix;
}

void ByteWriter::prefixed(std::size_t len_width, ByteSpan body) {
    if (len_width < 8 && body.size() >= (std::uint64_t{1} << (8 * len_width)))
        throw std::length_error("body too long for length prefix");
    uint(body.size(), len_width);
    bytes(body);
}

std::string to_hex(ByteSpan b) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(b.size() * 2);
    for (auto c : b) {
        s.push_back(digits[c >> 4]);
        s.push_back(digits[c & 0xf]);
    }
    return s;
}

namespace {
int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
    if (hex.starts_with("0x") || hex.starts_with("0X")) hex.remove_prefix(2);
    if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex string");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = hex_nibble(hex[2 * i]), lo = hex_nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

std::uint16_t load_be16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

std::uint32_t load_be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
}

}  // namespace vidfp
