#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "dmoney/hash.hpp"

namespace dmoney {

using PublicKey = Bytes;

struct KeyHandle {
    std::uint64_t value = 0;
    auto operator<=>(const KeyHandle&) const = default;
};

/// Detached signature over a root digest.
struct Signature {
    Bytes bytes;
    std::uint64_t signer = 0;

    bool operator==(const Signature&) const = default;
};

/// Pluggable signing scheme. Keys live inside the scheme instance and are
/// addressed by handle; verification needs only the public key.
class SignatureScheme {
public:
    virtual ~SignatureScheme() = default;

    virtual std::string name() const = 0;
    /// Derives a key pair deterministically from `seed`.
    virtual KeyHandle generate(std::uint64_t owner, ByteView seed) = 0;
    virtual PublicKey public_key(KeyHandle key) const = 0;
    virtual Signature sign(KeyHandle key, const Digest& message) const = 0;
    virtual bool verify(const Digest& message, const Signature& sig, const PublicKey& key) const = 0;
};

/// Ed25519 via libsodium.
class Ed25519Scheme final : public SignatureScheme {
public:
    Ed25519Scheme();

    std::string name() const override { return "ed25519"; }
    KeyHandle generate(std::uint64_t owner, ByteView seed) override;
    PublicKey public_key(KeyHandle key) const override;
    Signature sign(KeyHandle key, const Digest& message) const override;
    bool verify(const Digest& message, const Signature& sig, const PublicKey& key) const override;

private:
    struct KeyPair {
        std::uint64_t owner;
        Bytes secret;
        PublicKey pub;
    };
    const KeyPair& find(KeyHandle key) const;

    std::map<KeyHandle, KeyPair> keys_;
    std::uint64_t next_ = 1;
};

/// Deterministic keyed-hash test scheme. Verification resolves the public key
/// to its secret through this instance, so it only works in-process.
class KeyedHashScheme final : public SignatureScheme {
public:
    explicit KeyedHashScheme(Hasher hasher = default_hasher()) : hasher_(std::move(hasher)) {}

    std::string name() const override { return "keyed-hash-test"; }
    KeyHandle generate(std::uint64_t owner, ByteView seed) override;
    PublicKey public_key(KeyHandle key) const override;
    Signature sign(KeyHandle key, const Digest& message) const override;
    bool verify(const Digest& message, const Signature& sig, const PublicKey& key) const override;

private:
    Digest mac(const Digest& secret, const Digest& message) const;

    struct KeyPair {
        std::uint64_t owner;
        Digest secret;
        PublicKey pub;
    };
    Hasher hasher_;
    std::map<KeyHandle, KeyPair> keys_;
    std::map<PublicKey, Digest> by_public_;
    std::uint64_t next_ = 1;
};

/// Throws UnknownKey when `signer` is not held by `scheme`.
Signature sign_root(const SignatureScheme& scheme, const Digest& root, KeyHandle signer);
bool verify_root(const SignatureScheme& scheme, const Digest& root, const Signature& sig, const PublicKey& key);

}  // namespace dmoney
