#pragma once

#include <cstdint>

#include "dmoney/peer_ledger.hpp"
#include "dmoney/signature.hpp"

namespace dmoney {

/// A manager's signed statement that `root` is the latest root it holds for
/// a subject. Balance roots name one client (lo == hi); pair roots name a
/// pair and carry the epoch window [first_seq, first_seq + count).
struct Attestation {
    enum class Kind : std::uint8_t { BalanceRoot = 1, PairRoot = 2 };

    Kind kind = Kind::BalanceRoot;
    PairKey subject;
    std::uint64_t epoch = 0;
    std::uint64_t first_seq = 0;
    std::uint64_t count = 0;
    Digest root;
    Tick issued_at = 0;
    Signature signature;

    bool operator==(const Attestation&) const = default;

    /// The digest that gets signed.
    Digest message(const Hasher& hasher = default_hasher()) const;
    bool same_statement(const Attestation& other) const;

    Bytes encode() const;
    static Attestation decode(ByteView in);
};

Attestation attest(const SignatureScheme& scheme, KeyHandle key, Attestation unsigned_statement,
                   const Hasher& hasher = default_hasher());
bool verify_attestation(const SignatureScheme& scheme, const Attestation& a, const PublicKey& key,
                        const Hasher& hasher = default_hasher());

}  // namespace dmoney
