#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmoney/error.hpp"

namespace dmoney {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

using ClientId = std::uint64_t;
using Amount = std::int64_t;  // minor units
using Tick = std::uint64_t;

inline constexpr Tick kForever = std::numeric_limits<Tick>::max();

/// 32-byte hash output. Ordered and compared bytewise.
struct Digest {
    std::array<std::uint8_t, 32> bytes{};

    auto operator<=>(const Digest&) const = default;

    ByteView view() const noexcept { return {bytes.data(), bytes.size()}; }
    std::string hex() const;
    static Digest from_hex(std::string_view hex);
};

std::string to_hex(ByteView bytes);
Bytes from_hex(std::string_view hex);

/// Big-endian fixed-width writer for the canonical encodings.
class Encoder {
public:
    Encoder& u8(std::uint8_t v);
    Encoder& u32(std::uint32_t v);
    Encoder& u64(std::uint64_t v);
    Encoder& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
    Encoder& digest(const Digest& d);
    Encoder& raw(ByteView b);
    /// u32 length prefix followed by the bytes.
    Encoder& blob(ByteView b);

    const Bytes& bytes() const& noexcept { return buf_; }
    Bytes bytes() && noexcept { return std::move(buf_); }

private:
    Bytes buf_;
};

/// Bounds-checked reader; throws Errc::Malformed on truncation.
class Decoder {
public:
    explicit Decoder(ByteView in) : in_(in) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    Digest digest();
    Bytes raw(std::size_t n);
    Bytes blob();

    std::size_t remaining() const noexcept { return in_.size() - pos_; }
    bool done() const noexcept { return remaining() == 0; }
    void expect_done() const;

private:
    void need(std::size_t n) const;

    ByteView in_;
    std::size_t pos_ = 0;
};

/// A named function from bytes to Digest. Must be deterministic.
class HashScheme {
public:
    using Function = std::function<Digest(ByteView)>;

    HashScheme(std::string name, Function fn) : name_(std::move(name)), fn_(std::move(fn)) {}

    static HashScheme sha256();

    const std::string& name() const noexcept { return name_; }
    Digest operator()(ByteView input) const { return fn_(input); }

private:
    std::string name_;
    Function fn_;
};

// Domain-separation tags. Every hashed structure starts with exactly one.
namespace tag {
inline constexpr std::uint8_t kLeaf = 0x00;
inline constexpr std::uint8_t kInternal = 0x01;
inline constexpr std::uint8_t kBalanceCommit = 0x02;
inline constexpr std::uint8_t kEmptyBalanceTree = 0x03;
inline constexpr std::uint8_t kBalanceLeafNode = 0x04;
inline constexpr std::uint8_t kBalanceInternalNode = 0x05;
inline constexpr std::uint8_t kEmptyGridCell = 0x06;
inline constexpr std::uint8_t kAttestation = 0x07;
}  // namespace tag

/// Tree and commitment hashing over a pluggable scheme.
class Hasher {
public:
    Hasher() : Hasher(HashScheme::sha256()) {}
    explicit Hasher(HashScheme scheme) : scheme_(std::make_shared<HashScheme>(std::move(scheme))) {}

    const HashScheme& scheme() const noexcept { return *scheme_; }

    Digest raw(ByteView input) const { return (*scheme_)(input); }
    Digest tagged(std::uint8_t tag, ByteView body) const;

    /// H(0x00 || payload). Throws EmptyPayload.
    Digest leaf(ByteView payload) const;
    /// H(0x01 || left || right).
    Digest internal(const Digest& left, const Digest& right) const;
    /// H(0x02 || id || seq || balance). Throws NegativeBalance.
    Digest commit_balance(ClientId client, std::uint64_t seq, Amount balance) const;
    /// H(tag) with no body; used for empty sentinels.
    Digest marker(std::uint8_t tag) const { return tagged(tag, {}); }

private:
    std::shared_ptr<const HashScheme> scheme_;
};

/// Process-wide default (SHA-256) hasher.
const Hasher& default_hasher();

}  // namespace dmoney

template <>
struct std::hash<dmoney::Digest> {
    std::size_t operator()(const dmoney::Digest& d) const noexcept {
        std::size_t h = 0;
        for (int i = 0; i < 8; ++i) h = (h << 8) | d.bytes[i];
        return h;
    }
};
