#include "vidfp/quic.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>
#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"

#include "vidfp/embedded.hpp"
#include "vidfp/error.hpp"

namespace vidfp {

namespace {

constexpr std::uint8_t kInitialSaltV1[20] = {0x38, 0x76, 0x2c, 0xf7, 0xf5, 0x59, 0x34, 0xb3, 0x4d, 0x17,
                                             0x9a, 0xe6, 0xa4, 0xc8, 0x0c, 0xad, 0xcc, 0xbb, 0x7f, 0x0a};
constexpr std::size_t kTagLen = 16;
constexpr std::size_t kSampleLen = 16;
constexpr std::size_t kMaxCidLen = 20;

[[noreturn]] void quic_malformed(std::size_t offset, const std::string& what) {
    throw Error("quic", "Malformed", "QUIC malformed at offset " + std::to_string(offset) + ": " + what);
}

struct CipherCtxDeleter {
    void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

CipherCtx new_ctx() {
    CipherCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx) throw Error("quic", "CryptoError", "EVP_CIPHER_CTX_new failed");
    return ctx;
}

std::array<std::uint8_t, 5> header_protection_mask(const Bytes& hp, ByteSpan sample) {
    auto ctx = new_ctx();
    std::array<std::uint8_t, 32> out{};
    int len = 0;
    if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_ecb(), nullptr, hp.data(), nullptr) != 1 ||
        EVP_CIPHER_CTX_set_padding(ctx.get(), 0) != 1 ||
        EVP_EncryptUpdate(ctx.get(), out.data(), &len, sample.data(), static_cast<int>(kSampleLen)) != 1)
        throw Error("quic", "CryptoError", "header protection failed");
    std::array<std::uint8_t, 5> mask{};
    std::copy_n(out.begin(), 5, mask.begin());
    return mask;
}

Bytes make_nonce(const Bytes& iv, std::uint64_t pn) {
    Bytes nonce = iv;
    for (std::size_t i = 0; i < 8; ++i)
        nonce[nonce.size() - 1 - i] ^= static_cast<std::uint8_t>(pn >> (8 * i));
    return nonce;
}

struct LongHeader {
    std::uint32_t version = 0;
    Bytes dcid, scid;
    std::uint64_t token_length = 0;
    std::size_t pn_offset = 0;
    std::size_t packet_end = 0;
};

LongHeader parse_long_header(ByteSpan d) {
    LongHeader h;
    try {
        ByteReader r(d);
        std::uint8_t first = r.u8();
        if ((first & 0x80) == 0) quic_malformed(0, "not a long header");
        h.version = r.u32();
        std::uint8_t dlen = r.u8();
        if (dlen > kMaxCidLen) quic_malformed(5, "destination connection id too long");
        auto dcid = r.take(dlen);
        h.dcid.assign(dcid.begin(), dcid.end());
        std::uint8_t slen = r.u8();
        if (slen > kMaxCidLen) quic_malformed(r.offset() - 1, "source connection id too long");
        auto scid = r.take(slen);
        h.scid.assign(scid.begin(), scid.end());
        h.token_length = r.varint();
        if (h.token_length > r.remaining()) quic_malformed(r.offset(), "token overruns datagram");
        r.skip(static_cast<std::size_t>(h.token_length));
        std::uint64_t length = r.varint();
        h.pn_offset = r.offset();
        if (length > r.remaining()) quic_malformed(r.offset(), "length overruns datagram");
        h.packet_end = h.pn_offset + static_cast<std::size_t>(length);
    } catch (const OutOfBounds& oob) {
        quic_malformed(oob.offset, "truncated long header");
    }
    return h;
}

}  // namespace

bool is_quic_initial(ByteSpan p, std::span<const std::uint32_t> extra_versions) {
    if (p.size() < 7) return false;
    if ((p[0] & 0x80) == 0) return false;  // short header
    std::uint32_t version = load_be32(&p[1]);
    bool known = version == kQuicVersion1 ||
                 std::find(extra_versions.begin(), extra_versions.end(), version) != extra_versions.end();
    if (!known) return false;
    return ((p[0] >> 4) & 0x03) == 0;
}

Bytes hkdf_extract(ByteSpan salt, ByteSpan ikm) {
    Bytes out(EVP_MAX_MD_SIZE);
    unsigned int len = 0;
    static const std::uint8_t empty = 0;
    if (!HMAC(EVP_sha256(), salt.data(), static_cast<int>(salt.size()), ikm.empty() ? &empty : ikm.data(),
              ikm.size(), out.data(), &len))
        throw Error("quic", "CryptoError", "HMAC failed");
    out.resize(len);
    return out;
}

Bytes hkdf_expand_label(ByteSpan secret, std::string_view label, ByteSpan context, std::size_t length) {
    ByteWriter info;
    info.u16(static_cast<std::uint16_t>(length));
    std::string full = "tls13 ";
    full += label;
    info.u8(static_cast<std::uint8_t>(full.size()));
    info.bytes(full);
    info.prefixed(1, context);

    Bytes out;
    Bytes block;
    std::uint8_t counter = 1;
    while (out.size() < length) {
        Bytes msg = block;
        msg.insert(msg.end(), info.buffer().begin(), info.buffer().end());
        msg.push_back(counter++);
        block.assign(EVP_MAX_MD_SIZE, 0);
        unsigned int len = 0;
        if (!HMAC(EVP_sha256(), secret.data(), static_cast<int>(secret.size()), msg.data(), msg.size(),
                  block.data(), &len))
            throw Error("quic", "CryptoError", "HMAC failed");
        block.resize(len);
        out.insert(out.end(), block.begin(), block.end());
    }
    out.resize(length);
    return out;
}

InitialSecrets derive_initial_secrets(ByteSpan dcid, std::uint32_t version) {
    if (version != kQuicVersion1)
        throw Error("quic", "UnknownVersionSalt", "no Initial salt for QUIC version " + std::to_string(version));
    InitialSecrets s;
    s.initial_secret = hkdf_extract(ByteSpan(kInitialSaltV1, sizeof kInitialSaltV1), dcid);
    s.client_secret = hkdf_expand_label(s.initial_secret, "client in", {}, 32);
    s.server_secret = hkdf_expand_label(s.initial_secret, "server in", {}, 32);
    return s;
}

PacketProtectionKeys derive_packet_keys(ByteSpan secret) {
    PacketProtectionKeys k;
    k.key = hkdf_expand_label(secret, "quic key", {}, 16);
    k.iv = hkdf_expand_label(secret, "quic iv", {}, 12);
    k.hp = hkdf_expand_label(secret, "quic hp", {}, 16);
    return k;
}

PacketProtectionKeys derive_initial_keys(ByteSpan dcid, std::uint32_t version) {
    return derive_packet_keys(derive_initial_secrets(dcid, version).client_secret);
}

DecryptedInitial decrypt_initial(ByteSpan d, const PacketProtectionKeys& keys) {
    LongHeader h = parse_long_header(d);
    if (h.pn_offset + 4 + kSampleLen > h.packet_end)
        quic_malformed(h.pn_offset, "packet too short for header protection sample");

    auto mask = header_protection_mask(keys.hp, d.subspan(h.pn_offset + 4, kSampleLen));
    Bytes header(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(h.pn_offset + 4));
    header[0] ^= mask[0] & 0x0f;
    std::size_t pn_len = static_cast<std::size_t>(header[0] & 0x03) + 1;
    std::uint64_t pn = 0;
    for (std::size_t i = 0; i < pn_len; ++i) {
        header[h.pn_offset + i] ^= mask[1 + i];
        pn = (pn << 8) | header[h.pn_offset + i];
    }
    header.resize(h.pn_offset + pn_len);

    std::size_t ct_start = h.pn_offset + pn_len;
    if (h.packet_end < ct_start + kTagLen) quic_malformed(ct_start, "payload shorter than AEAD tag");
    std::size_t ct_len = h.packet_end - ct_start - kTagLen;
    ByteSpan ct = d.subspan(ct_start, ct_len);
    ByteSpan tag = d.subspan(ct_start + ct_len, kTagLen);

    Bytes nonce = make_nonce(keys.iv, pn);
    auto ctx = new_ctx();
    Bytes plain(ct_len + 16);
    int len = 0, total = 0;
    bool ok = EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, nullptr, nullptr) == 1 &&
              EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce.size()), nullptr) == 1 &&
              EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, keys.key.data(), nonce.data()) == 1 &&
              EVP_DecryptUpdate(ctx.get(), nullptr, &len, header.data(), static_cast<int>(header.size())) == 1 &&
              EVP_DecryptUpdate(ctx.get(), plain.data(), &len, ct.data(), static_cast<int>(ct.size())) == 1;
    total = len;
    if (ok) {
        Bytes tag_copy(tag.begin(), tag.end());
        ok = EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, static_cast<int>(kTagLen), tag_copy.data()) == 1 &&
             EVP_DecryptFinal_ex(ctx.get(), plain.data() + total, &len) == 1;
        total += len;
    }
    if (!ok) throw Error("quic", "AuthFailure", "Initial packet failed AEAD authentication");
    plain.resize(static_cast<std::size_t>(total));

    DecryptedInitial out;
    out.header.version = h.version;
    out.header.dcid = h.dcid;
    out.header.scid = h.scid;
    out.header.token_length = h.token_length;
    out.header.udp_payload_size = d.size();
    out.packet_number = pn;
    out.unprotected_header = std::move(header);
    out.plaintext = std::move(plain);
    out.packet_length = h.packet_end;
    return out;
}

std::size_t initial_overhead(const InitialPacketSpec& spec) {
    return 1 + 4 + 1 + spec.dcid.size() + 1 + spec.scid.size() + varint_size(spec.token.size()) +
           spec.token.size() + 2 + spec.pn_length + kTagLen;
}

Bytes encrypt_initial(const InitialPacketSpec& spec, const PacketProtectionKeys& keys) {
    if (spec.pn_length < 1 || spec.pn_length > 4) throw std::invalid_argument("pn_length must be 1..4");
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(0xc0 | (spec.pn_length - 1)));
    w.u32(spec.version);
    w.prefixed(1, spec.dcid);
    w.prefixed(1, spec.scid);
    w.varint(spec.token.size());
    w.bytes(spec.token);
    w.varint(spec.pn_length + spec.plaintext.size() + kTagLen, 2);
    std::size_t pn_offset = w.size();
    w.uint(spec.packet_number, spec.pn_length);
    Bytes header = w.take();

    Bytes nonce = make_nonce(keys.iv, spec.packet_number);
    auto ctx = new_ctx();
    Bytes ct(spec.plaintext.size() + 16);
    Bytes tag(kTagLen);
    int len = 0, total = 0;
    bool ok = EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, nullptr, nullptr) == 1 &&
              EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce.size()), nullptr) == 1 &&
              EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, keys.key.data(), nonce.data()) == 1 &&
              EVP_EncryptUpdate(ctx.get(), nullptr, &len, header.data(), static_cast<int>(header.size())) == 1 &&
              EVP_EncryptUpdate(ctx.get(), ct.data(), &len, spec.plaintext.data(),
                                static_cast<int>(spec.plaintext.size())) == 1;
    total = len;
    ok = ok && EVP_EncryptFinal_ex(ctx.get(), ct.data() + total, &len) == 1;
    total += len;
    ok = ok && EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, static_cast<int>(kTagLen), tag.data()) == 1;
    if (!ok) throw Error("quic", "CryptoError", "AEAD seal failed");
    ct.resize(static_cast<std::size_t>(total));

    Bytes packet = header;
    packet.insert(packet.end(), ct.begin(), ct.end());
    packet.insert(packet.end(), tag.begin(), tag.end());
    if (packet.size() < pn_offset + 4 + kSampleLen)
        throw std::invalid_argument("Initial payload too short for header protection");
    auto mask = header_protection_mask(keys.hp, ByteSpan(packet).subspan(pn_offset + 4, kSampleLen));
    packet[0] ^= mask[0] & 0x0f;
    for (std::size_t i = 0; i < spec.pn_length; ++i) packet[pn_offset + i] ^= mask[1 + i];
    return packet;
}

std::vector<CryptoFrame> parse_initial_frames(ByteSpan plaintext) {
    std::vector<CryptoFrame> frames;
    try {
        ByteReader r(plaintext);
        while (!r.empty()) {
            std::uint64_t type = r.varint();
            switch (type) {
                case 0x00:  // PADDING
                case 0x01:  // PING
                    break;
                case 0x02:
                case 0x03: {  // ACK
                    r.varint();
                    r.varint();
                    std::uint64_t ranges = r.varint();
                    r.varint();
                    for (std::uint64_t i = 0; i < ranges; ++i) {
                        r.varint();
                        r.varint();
                    }
                    if (type == 0x03) {
                        r.varint();
                        r.varint();
                        r.varint();
                    }
                    break;
                }
                case 0x06: {  // CRYPTO
                    CryptoFrame f;
                    f.offset = r.varint();
                    std::uint64_t len = r.varint();
                    if (len > r.remaining()) quic_malformed(r.offset(), "CRYPTO frame overruns packet");
                    auto data = r.take(static_cast<std::size_t>(len));
                    f.data.assign(data.begin(), data.end());
                    frames.push_back(std::move(f));
                    break;
                }
                case 0x1c: {  // CONNECTION_CLOSE
                    r.varint();
                    r.varint();
                    std::uint64_t len = r.varint();
                    if (len > r.remaining()) quic_malformed(r.offset(), "reason overruns packet");
                    r.skip(static_cast<std::size_t>(len));
                    break;
                }
                default:
                    quic_malformed(r.offset(), "frame type " + std::to_string(type) + " not allowed in Initial");
            }
        }
    } catch (const OutOfBounds& oob) {
        quic_malformed(oob.offset, "truncated frame");
    }
    return frames;
}

CryptoReassembly reassemble_crypto(const std::vector<CryptoFrame>& frames, bool final) {
    std::vector<const CryptoFrame*> order;
    for (const auto& f : frames) order.push_back(&f);
    std::stable_sort(order.begin(), order.end(),
                     [](const CryptoFrame* a, const CryptoFrame* b) { return a->offset < b->offset; });
    Bytes stream;
    for (const auto* f : order) {
        if (f->offset > stream.size()) break;
        std::size_t skip = stream.size() - static_cast<std::size_t>(f->offset);
        if (skip < f->data.size())
            stream.insert(stream.end(), f->data.begin() + static_cast<std::ptrdiff_t>(skip), f->data.end());
    }
    CryptoReassembly out;
    if (stream.size() >= 4) {
        std::size_t len = (std::size_t(stream[1]) << 16) | (std::size_t(stream[2]) << 8) | stream[3];
        if (stream[0] == 1 && stream.size() >= 4 + len) {
            out.status = CryptoStatus::Complete;
            out.body.assign(stream.begin() + 4, stream.begin() + 4 + static_cast<std::ptrdiff_t>(len));
            return out;
        }
    }
    out.status = final ? CryptoStatus::Gap : CryptoStatus::Incomplete;
    return out;
}

ParamRegistry ParamRegistry::defaults() { return from_json(embedded::quic_params_json); }

ParamRegistry ParamRegistry::from_json(std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error("quic", "BadRegistry", e.what());
    }
    if (!j.is_object()) throw Error("quic", "BadRegistry", "registry must be a JSON object");
    std::map<std::uint64_t, std::string> names;
    for (auto it = j.begin(); it != j.end(); ++it) {
        try {
            names[std::stoull(it.key(), nullptr, 0)] = it.value().get<std::string>();
        } catch (const std::exception&) {
            throw Error("quic", "BadRegistry", "bad registry id '" + it.key() + "'");
        }
    }
    return ParamRegistry(std::move(names));
}

ParamRegistry ParamRegistry::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("quic", "IOError", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::optional<std::string> ParamRegistry::name_of(std::uint64_t id) const {
    auto it = names_.find(id);
    if (it == names_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::uint64_t> ParamRegistry::id_of(std::string_view name) const {
    for (const auto& [id, n] : names_)
        if (n == name) return id;
    return std::nullopt;
}

namespace {

std::uint64_t value_varint(const QuicTransportParam& p, std::size_t offset) {
    ByteReader r(p.value, offset);
    std::uint64_t v = 0;
    try {
        v = r.varint();
    } catch (const OutOfBounds& oob) {
        quic_malformed(oob.offset, "transport parameter value is not a varint");
    }
    if (!r.empty()) quic_malformed(r.offset(), "trailing bytes after varint");
    return v;
}

}  // namespace

QuicTransportParams parse_transport_params(ByteSpan body, const ParamRegistry& registry) {
    QuicTransportParams out;
    try {
        ByteReader r(body);
        while (!r.empty()) {
            QuicTransportParam p;
            p.id = r.varint();
            std::uint64_t len = r.varint();
            if (len > r.remaining()) quic_malformed(r.offset(), "parameter value overruns extension");
            std::size_t value_at = r.offset();
            auto v = r.take(static_cast<std::size_t>(len));
            p.value.assign(v.begin(), v.end());
            out.ids.push_back(is_grease_transport_param(p.id) ? kGreaseTransportParam : p.id);

            auto name = registry.name_of(p.id);
            if (name) {
                const std::string& n = *name;
                auto vi = [&] { return value_varint(p, value_at); };
                if (n == "max_idle_timeout") out.max_idle_timeout = vi();
                else if (n == "max_udp_payload_size") out.max_udp_payload_size = vi();
                else if (n == "initial_max_data") out.initial_max_data = vi();
                else if (n == "initial_max_stream_data_bidi_local") out.initial_max_stream_data_bidi_local = vi();
                else if (n == "initial_max_stream_data_bidi_remote") out.initial_max_stream_data_bidi_remote = vi();
                else if (n == "initial_max_stream_data_uni") out.initial_max_stream_data_uni = vi();
                else if (n == "initial_max_streams_bidi") out.initial_max_streams_bidi = vi();
                else if (n == "initial_max_streams_uni") out.initial_max_streams_uni = vi();
                else if (n == "max_ack_delay") out.max_ack_delay = vi();
                else if (n == "disable_active_migration") out.disable_active_migration = true;
                else if (n == "active_connection_id_limit") out.active_connection_id_limit = vi();
                else if (n == "initial_source_connection_id") out.initial_source_connection_id_length = p.value.size();
                else if (n == "max_datagram_frame_size") out.max_datagram_frame_size = vi();
                else if (n == "grease_quic_bit") out.grease_quic_bit = true;
                else if (n == "initial_rtt") out.initial_rtt = true;
                else if (n == "google_connection_options") out.google_connection_options = p.value;
                else if (n == "user_agent") out.user_agent = p.value;
                else if (n == "google_version") out.google_version = p.value;
                else if (n == "version_information") out.version_information = p.value;
            }
            out.params.push_back(std::move(p));
        }
    } catch (const OutOfBounds& oob) {
        quic_malformed(oob.offset, "truncated transport parameter");
    }
    return out;
}

}  // namespace vidfp
