#include "dmoney/signature.hpp"

#include <sodium.h>

#include <stdexcept>

namespace dmoney {

Ed25519Scheme::Ed25519Scheme() {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
}

KeyHandle Ed25519Scheme::generate(std::uint64_t owner, ByteView seed) {
    // Stretch arbitrary seed material to the 32-byte seed libsodium expects.
    std::array<unsigned char, crypto_sign_SEEDBYTES> stretched{};
    crypto_generichash(stretched.data(), stretched.size(), seed.data(), seed.size(), nullptr, 0);

    KeyPair kp{owner, Bytes(crypto_sign_SECRETKEYBYTES), PublicKey(crypto_sign_PUBLICKEYBYTES)};
    crypto_sign_seed_keypair(kp.pub.data(), kp.secret.data(), stretched.data());
    KeyHandle handle{next_++};
    keys_.emplace(handle, std::move(kp));
    return handle;
}

const Ed25519Scheme::KeyPair& Ed25519Scheme::find(KeyHandle key) const {
    auto it = keys_.find(key);
    if (it == keys_.end()) throw Error(Errc::UnknownKey, "handle " + std::to_string(key.value));
    return it->second;
}

PublicKey Ed25519Scheme::public_key(KeyHandle key) const { return find(key).pub; }

Signature Ed25519Scheme::sign(KeyHandle key, const Digest& message) const {
    const auto& kp = find(key);
    Signature sig{Bytes(crypto_sign_BYTES), kp.owner};
    crypto_sign_detached(sig.bytes.data(), nullptr, message.bytes.data(), message.bytes.size(), kp.secret.data());
    return sig;
}

bool Ed25519Scheme::verify(const Digest& message, const Signature& sig, const PublicKey& key) const {
    if (sig.bytes.size() != crypto_sign_BYTES || key.size() != crypto_sign_PUBLICKEYBYTES) return false;
    return crypto_sign_verify_detached(sig.bytes.data(), message.bytes.data(), message.bytes.size(), key.data()) == 0;
}

KeyHandle KeyedHashScheme::generate(std::uint64_t owner, ByteView seed) {
    Encoder e;
    e.raw(seed);
    Digest secret = hasher_.raw(e.bytes());
    Encoder p;
    p.u8('P').digest(secret);
    Digest pub = hasher_.raw(p.bytes());
    KeyPair kp{owner, secret, PublicKey(pub.bytes.begin(), pub.bytes.end())};
    by_public_[kp.pub] = secret;
    KeyHandle handle{next_++};
    keys_.emplace(handle, std::move(kp));
    return handle;
}

PublicKey KeyedHashScheme::public_key(KeyHandle key) const {
    auto it = keys_.find(key);
    if (it == keys_.end()) throw Error(Errc::UnknownKey, "handle " + std::to_string(key.value));
    return it->second.pub;
}

Digest KeyedHashScheme::mac(const Digest& secret, const Digest& message) const {
    Encoder e;
    e.u8('S').digest(secret).digest(message);
    return hasher_.raw(e.bytes());
}

Signature KeyedHashScheme::sign(KeyHandle key, const Digest& message) const {
    auto it = keys_.find(key);
    if (it == keys_.end()) throw Error(Errc::UnknownKey, "handle " + std::to_string(key.value));
    Digest m = mac(it->second.secret, message);
    return Signature{Bytes(m.bytes.begin(), m.bytes.end()), it->second.owner};
}

bool KeyedHashScheme::verify(const Digest& message, const Signature& sig, const PublicKey& key) const {
    auto it = by_public_.find(key);
    if (it == by_public_.end() || sig.bytes.size() != 32) return false;
    Digest m = mac(it->second, message);
    return std::equal(m.bytes.begin(), m.bytes.end(), sig.bytes.begin());
}

Signature sign_root(const SignatureScheme& scheme, const Digest& root, KeyHandle signer) {
    return scheme.sign(signer, root);
}

bool verify_root(const SignatureScheme& scheme, const Digest& root, const Signature& sig, const PublicKey& key) {
    return scheme.verify(root, sig, key);
}

}  // namespace dmoney
