#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "dmoney/attestation.hpp"
#include "dmoney/balance_mht.hpp"
#include "dmoney/client_node.hpp"
#include "dmoney/currency_manager.hpp"
#include "dmoney/integrity_manager.hpp"
#include "dmoney/merkle_tree.hpp"

namespace dmoney {

/// What one data client may ask about one subject.
struct Grant {
    std::uint64_t data_client = 0;
    ClientId subject = 0;
    std::set<PairKey> pairs;
    bool balance_history = false;

    bool allows_pair(PairKey pair) const { return pairs.count(pair) > 0; }
};

/// Throws UnknownSubject.
Grant authorize(const CurrencyManager& cm, std::uint64_t data_client, ClientId subject, std::set<PairKey> pairs,
                bool balance_history = false);

struct VerificationObject {
    enum class Kind : std::uint8_t { TransactionInclusion = 1, BalanceRange = 2 };

    Kind kind = Kind::TransactionInclusion;

    // TransactionInclusion: records in [seq_lo, seq_hi] with one proof each.
    PairKey pair;
    std::uint64_t seq_lo = 0;
    std::uint64_t seq_hi = 0;
    std::vector<Bytes> records;
    std::vector<InclusionProof> proofs;

    // BalanceRange.
    std::vector<BalanceChangeRecord> balance_records;
    RangeVO range;

    /// Integrity Manager's pair root or Currency Manager's balance root.
    Attestation attestation;

    bool operator==(const VerificationObject&) const = default;

    /// kind byte || length-prefixed sections.
    Bytes encode() const;
    static VerificationObject decode(ByteView in);

    /// Adversary hook: drops the n-th returned record and its proof.
    void omit_record(std::size_t n);
};

struct Verdict {
    bool correct = false;
    bool complete = false;
    bool fresh = false;

    bool ok() const noexcept { return correct && complete && fresh; }
};

struct AttestingKeys {
    PublicKey integrity_manager;
    PublicKey currency_manager;
};

/// The Currency Manager's signed statement of a client's settled MHTR.
Attestation attest_balance_root(const CurrencyManager& cm, const SignatureScheme& scheme, KeyHandle cm_key,
                                ClientId client, Tick now);

/// Built by the subject from its own trees. The attestation is the Integrity
/// Manager's latest validated root of the pair; proofs are against the
/// attested prefix. Throws ScopeViolation.
VerificationObject query_transactions(const Grant& grant, const ClientNode& subject, const IntegrityManager& im,
                                      PairKey pair, std::uint64_t seq_lo, std::uint64_t seq_hi, Tick now);
/// Same, with a pair attestation obtained earlier.
VerificationObject query_transactions(const Grant& grant, const ClientNode& subject, const Attestation& pair_statement,
                                      PairKey pair, std::uint64_t seq_lo, std::uint64_t seq_hi);

/// Range of the subject's balance history with the manager's attestation.
/// Throws ScopeViolation.
VerificationObject query_balances(const Grant& grant, const ClientNode& subject, const Attestation& manager_statement,
                                  BalanceKey lo, BalanceKey hi);

/// Uses only the VO, the attesting keys and the attestor's current statement
/// (`latest`) for the same subject.
Verdict verify_vo(const SignatureScheme& scheme, const VerificationObject& vo, const AttestingKeys& keys,
                  const Attestation& latest, const Hasher& hasher = default_hasher());

}  // namespace dmoney
