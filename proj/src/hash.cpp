#include "dmoney/hash.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <stdexcept>

namespace dmoney {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::EmptyPayload: return "EmptyPayload";
        case Errc::NegativeBalance: return "NegativeBalance";
        case Errc::UnknownKey: return "UnknownKey";
        case Errc::EmptyTree: return "EmptyTree";
        case Errc::IndexOutOfRange: return "IndexOutOfRange";
        case Errc::Malformed: return "Malformed";
        case Errc::NonPositiveAmount: return "NonPositiveAmount";
        case Errc::InsufficientBalance: return "InsufficientBalance";
        case Errc::LimitExceeded: return "LimitExceeded";
        case Errc::NotRegisteredPeers: return "NotRegisteredPeers";
        case Errc::WrongAddressee: return "WrongAddressee";
        case Errc::PeerSuspended: return "PeerSuspended";
        case Errc::DuplicateSequence: return "DuplicateSequence";
        case Errc::MissingCounterSignature: return "MissingCounterSignature";
        case Errc::NonMonotonicKey: return "NonMonotonicKey";
        case Errc::InconsistentBalance: return "InconsistentBalance";
        case Errc::InvertedRange: return "InvertedRange";
        case Errc::UnknownClient: return "UnknownClient";
        case Errc::ClientSuspended: return "ClientSuspended";
        case Errc::UnknownTransaction: return "UnknownTransaction";
        case Errc::PendingSettlement: return "PendingSettlement";
        case Errc::StaleProvenance: return "StaleProvenance";
        case Errc::UnknownReporter: return "UnknownReporter";
        case Errc::UnregisteredPair: return "UnregisteredPair";
        case Errc::NotQuiescent: return "NotQuiescent";
        case Errc::EmptyGrid: return "EmptyGrid";
        case Errc::BadSignature: return "BadSignature";
        case Errc::PeerUnreachable: return "PeerUnreachable";
        case Errc::PartnerRootDisagreement: return "PartnerRootDisagreement";
        case Errc::ConservationViolation: return "ConservationViolation";
        case Errc::ManagerUnreachable: return "ManagerUnreachable";
        case Errc::CorruptSnapshot: return "CorruptSnapshot";
        case Errc::UnknownSubject: return "UnknownSubject";
        case Errc::ScopeViolation: return "ScopeViolation";
        case Errc::ScenarioParseError: return "ScenarioParseError";
        case Errc::StepLimitExceeded: return "StepLimitExceeded";
        case Errc::UnknownTarget: return "UnknownTarget";
    }
    return "Unknown";
}

std::string to_hex(ByteView bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0x0f]);
    }
    return out;
}

namespace {
int nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) throw Error(Errc::Malformed, "odd-length hex string");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = nibble(hex[2 * i]);
        int lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw Error(Errc::Malformed, "bad hex digit");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

std::string Digest::hex() const { return to_hex(view()); }

Digest Digest::from_hex(std::string_view hex) {
    auto raw = dmoney::from_hex(hex);
    if (raw.size() != 32) throw Error(Errc::Malformed, "digest must be 32 bytes");
    Digest d;
    std::memcpy(d.bytes.data(), raw.data(), 32);
    return d;
}

Encoder& Encoder::u8(std::uint8_t v) {
    buf_.push_back(v);
    return *this;
}

Encoder& Encoder::u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
}

Encoder& Encoder::u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
}

Encoder& Encoder::digest(const Digest& d) { return raw(d.view()); }

Encoder& Encoder::raw(ByteView b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
    return *this;
}

Encoder& Encoder::blob(ByteView b) {
    if (b.size() > 0xffffffffu) throw Error(Errc::Malformed, "blob too large");
    u32(static_cast<std::uint32_t>(b.size()));
    return raw(b);
}

void Decoder::need(std::size_t n) const {
    if (remaining() < n) throw Error(Errc::Malformed, "truncated input");
}

std::uint8_t Decoder::u8() {
    need(1);
    return in_[pos_++];
}

std::uint32_t Decoder::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | in_[pos_++];
    return v;
}

std::uint64_t Decoder::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | in_[pos_++];
    return v;
}

Digest Decoder::digest() {
    need(32);
    Digest d;
    std::memcpy(d.bytes.data(), in_.data() + pos_, 32);
    pos_ += 32;
    return d;
}

Bytes Decoder::raw(std::size_t n) {
    need(n);
    Bytes out(in_.begin() + static_cast<std::ptrdiff_t>(pos_), in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
}

Bytes Decoder::blob() { return raw(u32()); }

void Decoder::expect_done() const {
    if (!done()) throw Error(Errc::Malformed, "trailing bytes");
}

HashScheme HashScheme::sha256() {
    return HashScheme("sha256", [](ByteView input) {
        Digest d;
        unsigned int len = 0;
        if (EVP_Digest(input.data(), input.size(), d.bytes.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
            throw std::runtime_error("EVP_Digest(sha256) failed");
        return d;
    });
}

Digest Hasher::tagged(std::uint8_t tag, ByteView body) const {
    Bytes buf;
    buf.reserve(body.size() + 1);
    buf.push_back(tag);
    buf.insert(buf.end(), body.begin(), body.end());
    return raw(buf);
}

Digest Hasher::leaf(ByteView payload) const {
    if (payload.empty()) throw Error(Errc::EmptyPayload);
    return tagged(tag::kLeaf, payload);
}

Digest Hasher::internal(const Digest& left, const Digest& right) const {
    std::array<std::uint8_t, 65> buf;
    buf[0] = tag::kInternal;
    std::memcpy(buf.data() + 1, left.bytes.data(), 32);
    std::memcpy(buf.data() + 33, right.bytes.data(), 32);
    return raw(buf);
}

Digest Hasher::commit_balance(ClientId client, std::uint64_t seq, Amount balance) const {
    if (balance < 0) throw Error(Errc::NegativeBalance, "commitment over " + std::to_string(balance));
    Encoder e;
    e.u8(tag::kBalanceCommit).u64(client).u64(seq).i64(balance);
    return raw(e.bytes());
}

const Hasher& default_hasher() {
    static const Hasher h;
    return h;
}

}  // namespace dmoney
