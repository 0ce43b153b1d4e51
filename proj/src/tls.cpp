#include "vidfp/tls.hpp"

#include "vidfp/error.hpp"

namespace vidfp {

TcpHandshakeFields parse_syn(const PacketView& pkt) {
    TcpHandshakeFields f;
    std::uint8_t flags = pkt.tcp_flags.value_or(0);
    f.cwr = flags & tcp_flag::CWR;
    f.ece = flags & tcp_flag::ECE;
    f.urg = flags & tcp_flag::URG;
    f.ack = flags & tcp_flag::ACK;
    f.psh = flags & tcp_flag::PSH;
    f.rst = flags & tcp_flag::RST;
    f.syn = flags & tcp_flag::SYN;
    f.fin = flags & tcp_flag::FIN;
    f.window_size = pkt.tcp_window;

    const auto& opt = pkt.tcp_options;
    std::size_t i = 0;
    while (i < opt.size()) {
        std::uint8_t kind = opt[i];
        if (kind == 0) break;
        if (kind == 1) {
            ++i;
            continue;
        }
        if (i + 1 >= opt.size() || opt[i + 1] < 2 || i + opt[i + 1] > opt.size()) {
            f.options_malformed = true;
            break;
        }
        std::uint8_t len = opt[i + 1];
        if (kind == 2 && len == 4) {
            f.mss = load_be16(&opt[i + 2]);
        } else if (kind == 3 && len == 3) {
            f.window_scale = opt[i + 2];
        } else if (kind == 4 && len == 2) {
            f.sack_permitted = true;
        } else if ((kind == 2 && len != 4) || (kind == 3 && len != 3) || (kind == 4 && len != 2)) {
            f.options_malformed = true;
            break;
        }
        i += len;
    }
    if (f.options_malformed) {
        f.mss.reset();
        f.window_scale.reset();
        f.sack_permitted = false;
    }
    return f;
}

const TlsExtension* ClientHello::find_extension(std::uint16_t type) const {
    for (const auto& e : extensions)
        if (e.type == type) return &e;
    return nullptr;
}

namespace {
constexpr std::uint8_t kContentHandshake = 22;
constexpr std::uint8_t kHandshakeClientHello = 1;
constexpr std::size_t kMaxRecordLen = (1u << 14) + 2048;
}  // namespace

ChloExtract extract_chlo(ByteSpan stream) {
    ChloExtract out;
    if (stream.empty()) return out;
    if (stream[0] != kContentHandshake) {
        out.status = ChloExtractStatus::NotTLS;
        return out;
    }
    Bytes hs;
    std::size_t pos = 0;
    while (true) {
        if (hs.size() >= 4) {
            if (hs[0] != kHandshakeClientHello) {
                out.status = ChloExtractStatus::NotTLS;
                return out;
            }
            std::size_t len = (std::size_t(hs[1]) << 16) | (std::size_t(hs[2]) << 8) | hs[3];
            if (hs.size() >= 4 + len) {
                out.status = ChloExtractStatus::Complete;
                out.body.assign(hs.begin() + 4, hs.begin() + 4 + static_cast<std::ptrdiff_t>(len));
                out.consumed = pos;
                return out;
            }
        }
        if (stream.size() - pos < 5) return out;
        const auto* rec = stream.data() + pos;
        if (rec[0] != kContentHandshake || rec[1] != 3) {
            out.status = pos == 0 ? ChloExtractStatus::NotTLS : ChloExtractStatus::Malformed;
            return out;
        }
        std::size_t rlen = load_be16(rec + 3);
        if (rlen == 0 || rlen > kMaxRecordLen) {
            out.status = ChloExtractStatus::Malformed;
            return out;
        }
        if (stream.size() - pos < 5 + rlen) return out;
        hs.insert(hs.end(), rec + 5, rec + 5 + rlen);
        pos += 5 + rlen;
    }
}

namespace {

[[noreturn]] void malformed(std::size_t offset, const std::string& what) {
    throw Error("tls", "Malformed", "ClientHello malformed at offset " + std::to_string(offset) + ": " + what);
}

std::vector<std::uint16_t> read_u16_list(ByteReader r) {
    std::vector<std::uint16_t> out;
    if (r.remaining() % 2 != 0) malformed(r.offset(), "odd-length code list");
    while (!r.empty()) out.push_back(canonical_grease(r.u16()));
    return out;
}

std::vector<std::uint8_t> read_u8_list(ByteReader r) {
    std::vector<std::uint8_t> out;
    while (!r.empty()) out.push_back(r.u8());
    return out;
}

std::vector<std::string> read_alpn_list(ByteReader list) {
    std::vector<std::string> out;
    while (!list.empty()) {
        auto len = list.u8();
        auto s = list.take(len);
        out.emplace_back(s.begin(), s.end());
    }
    return out;
}

void decode_extension(ClientHello& ch, std::uint16_t type, ByteReader body) {
    switch (type) {
        case tls_ext::server_name: {
            auto list = body.sub(2);
            std::string host;
            while (!list.empty()) {
                auto name_type = list.u8();
                auto name = list.sub(2);
                if (name_type == 0 && host.empty()) {
                    auto s = name.take(name.remaining());
                    host.assign(s.begin(), s.end());
                }
            }
            ch.server_name = host;
            break;
        }
        case tls_ext::status_request:
            ch.status_request_type = body.u8();
            break;
        case tls_ext::supported_groups:
            ch.supported_groups = read_u16_list(body.sub(2));
            break;
        case tls_ext::ec_point_formats:
            ch.ec_point_formats = read_u8_list(body.sub(1));
            break;
        case tls_ext::signature_algorithms:
            ch.signature_algorithms = read_u16_list(body.sub(2));
            break;
        case tls_ext::alpn:
            ch.alpn = read_alpn_list(body.sub(2));
            break;
        case tls_ext::signed_certificate_timestamp:
            ch.signed_certificate_timestamp_length = body.remaining();
            break;
        case tls_ext::padding:
            ch.padding_length = body.remaining();
            break;
        case tls_ext::encrypt_then_mac:
            ch.encrypt_then_mac = true;
            break;
        case tls_ext::extended_master_secret:
            ch.extended_master_secret = true;
            break;
        case tls_ext::compress_certificate: {
            auto list = body.sub(1);
            ch.compress_certificate = read_u16_list(list);
            break;
        }
        case tls_ext::record_size_limit:
            ch.record_size_limit = body.u16();
            break;
        case tls_ext::delegated_credentials:
            ch.delegated_credentials = read_u16_list(body.sub(2));
            break;
        case tls_ext::session_ticket:
            ch.session_ticket_length = body.remaining();
            break;
        case tls_ext::pre_shared_key:
            ch.pre_shared_key = true;
            break;
        case tls_ext::early_data:
            ch.early_data_length = body.remaining();
            break;
        case tls_ext::supported_versions:
            ch.supported_versions = read_u16_list(body.sub(1));
            break;
        case tls_ext::psk_key_exchange_modes:
            ch.psk_key_exchange_modes = read_u8_list(body.sub(1));
            break;
        case tls_ext::post_handshake_auth:
            ch.post_handshake_auth = true;
            break;
        case tls_ext::key_share: {
            auto list = body.sub(2);
            std::vector<std::uint16_t> groups;
            while (!list.empty()) {
                groups.push_back(canonical_grease(list.u16()));
                list.sub(2);
            }
            ch.key_share_groups = std::move(groups);
            break;
        }
        case tls_ext::application_settings_old:
        case tls_ext::application_settings:
            ch.application_settings = read_alpn_list(body.sub(2));
            break;
        case tls_ext::renegotiation_info:
            ch.renegotiation_info = true;
            break;
        case tls_ext::quic_transport_parameters: {
            auto s = body.take(body.remaining());
            ch.quic_transport_parameters = Bytes(s.begin(), s.end());
            break;
        }
        default:
            break;
    }
}

}  // namespace

ClientHello parse_client_hello(ByteSpan body) {
    ClientHello ch;
    ch.handshake_length = static_cast<std::uint32_t>(body.size());
    try {
        ByteReader r(body);
        ch.legacy_version = r.u16();
        auto random = r.take(32);
        ch.random.assign(random.begin(), random.end());
        auto sid = r.sub(1);
        auto sid_bytes = sid.take(sid.remaining());
        ch.session_id.assign(sid_bytes.begin(), sid_bytes.end());
        auto suites = r.sub(2);
        if (suites.remaining() % 2 != 0) malformed(suites.offset(), "odd cipher suite length");
        while (!suites.empty()) ch.cipher_suites.push_back(canonical_grease(suites.u16()));
        auto comp = r.sub(1);
        auto cbytes = comp.take(comp.remaining());
        ch.compression_methods.assign(cbytes.begin(), cbytes.end());
        if (r.empty()) return ch;

        ch.has_extensions_block = true;
        ch.extensions_length = r.u16();
        std::size_t exts_at = r.offset();
        ByteReader exts(r.take(ch.extensions_length), exts_at);
        while (!exts.empty()) {
            std::uint16_t type = exts.u16();
            auto ext_body = exts.sub(2);
            std::size_t len = ext_body.remaining();
            std::size_t at = ext_body.offset();
            TlsExtension e;
            e.type = type;
            auto raw = body.subspan(at, len);
            e.body.assign(raw.begin(), raw.end());
            ch.extension_types.push_back(canonical_grease(type));
            decode_extension(ch, type, ext_body);
            ch.extensions.push_back(std::move(e));
        }
    } catch (const OutOfBounds& oob) {
        malformed(oob.offset, "field runs past end of message");
    }
    return ch;
}

std::string compress_certificate_name(std::uint16_t alg) {
    switch (alg) {
        case 1: return "zlib";
        case 2: return "brotli";
        case 3: return "zstd";
        case kGreaseCanonical: return "GREASE";
        default: return "0x" + to_hex(Bytes{static_cast<std::uint8_t>(alg >> 8), static_cast<std::uint8_t>(alg)});
    }
}

}  // namespace vidfp
