#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dmoney/merkle_tree.hpp"
#include "dmoney/signature.hpp"

namespace dmoney {

/// The Currency Manager's participant id. It is the counterparty of every
/// issuance and redemption.
inline constexpr ClientId kCurrencyManagerId = 0;
inline constexpr Amount kNoLimit = std::numeric_limits<Amount>::max();

enum class ClientStatus : std::uint8_t { Active, Suspended, Disenrolled };

/// Unordered client pair, stored with lo < hi.
struct PairKey {
    ClientId lo = 0;
    ClientId hi = 0;

    static PairKey of(ClientId a, ClientId b) { return a < b ? PairKey{a, b} : PairKey{b, a}; }
    bool contains(ClientId id) const noexcept { return id == lo || id == hi; }
    ClientId other(ClientId id) const noexcept { return id == lo ? hi : lo; }
    std::string str() const { return std::to_string(lo) + ":" + std::to_string(hi); }

    auto operator<=>(const PairKey&) const = default;
};

/// Canonical credit-debit pair. Both peers encode it to the same 232 bytes.
struct TransactionPairRecord {
    std::uint64_t pair_seq = 0;
    Tick timestamp = 0;
    ClientId payer = 0;
    ClientId payee = 0;
    Amount amount = 0;
    Digest payer_prior_commit;
    Digest payer_new_commit;
    Digest payee_prior_commit;
    Digest payee_new_commit;
    Digest payer_provenance;
    Digest payee_provenance;

    static constexpr std::size_t kEncodedSize = 5 * 8 + 6 * 32;

    bool operator==(const TransactionPairRecord&) const = default;

    PairKey pair() const { return PairKey::of(payer, payee); }
    /// +amount for the payee, -amount for the payer, 0 otherwise.
    Amount delta_for(ClientId self) const noexcept;

    Bytes encode() const;
    static TransactionPairRecord decode(ByteView in);
};

/// "<seq>.1" for the payer's debit leg, "<seq>.2" for the payee's credit leg.
std::string leg_id(std::uint64_t pair_seq, bool payer_leg);

/// One peer's private view of a committed pair, with its plaintext balances.
struct LocalView {
    std::uint64_t pair_seq = 0;
    std::string leg_id;
    Amount own_prior_balance = 0;
    Amount own_new_balance = 0;
    TransactionPairRecord record;

    bool operator==(const LocalView&) const = default;
};

LocalView make_local_view(const TransactionPairRecord& record, ClientId self, Amount own_prior_balance);

/// The caller-side facts a peer contributes to a proposal or acceptance.
struct PartyContext {
    ClientId id = 0;
    Amount balance = 0;
    Amount limit = kNoLimit;
    Digest provenance;  // the party's current balance tree root
    ClientStatus status = ClientStatus::Active;
    /// The Currency Manager pays from an unbounded reserve; its commitments are over 0.
    bool issuer = false;
};

struct TransactionProposal {
    std::uint64_t pair_seq = 0;
    Tick timestamp = 0;
    ClientId payer = 0;
    ClientId payee = 0;
    Amount amount = 0;
    Digest payer_prior_commit;
    Digest payer_new_commit;
    Digest payer_provenance;

    bool operator==(const TransactionProposal&) const = default;
};

struct ArchivedEpoch {
    std::uint64_t epoch = 0;
    Digest root;
    std::uint64_t first_seq = 0;
    std::vector<Bytes> leaves;

    bool operator==(const ArchivedEpoch&) const = default;
};

/// Append-only Merkle tree over one pair's canonical records. Both peers of
/// the pair hold byte-identical copies.
class PeerTransactionTree {
public:
    explicit PeerTransactionTree(PairKey key, Hasher hasher = default_hasher());

    const PairKey& key() const noexcept { return key_; }
    std::uint64_t epoch() const noexcept { return epoch_; }
    /// Sequence number of the first leaf in the current epoch.
    std::uint64_t first_seq() const noexcept { return first_seq_; }
    std::uint64_t next_seq() const noexcept { return first_seq_ + leaves_.size(); }
    std::size_t size() const noexcept { return leaves_.size(); }
    bool empty() const noexcept { return leaves_.empty(); }

    const std::vector<Bytes>& leaves() const noexcept { return leaves_; }
    std::vector<TransactionPairRecord> records() const;
    const std::vector<ArchivedEpoch>& archived() const noexcept { return archived_; }
    const MerkleTree& tree() const noexcept { return tree_; }

    std::optional<Digest> root() const;

    /// Throws DuplicateSequence unless record.pair_seq == next_seq().
    void append(const TransactionPairRecord& record);
    void rollback_last();
    /// Closes the current epoch; callers go through reset_epoch().
    void archive_current();

    /// Proof for a sequence number in the current epoch. Throws IndexOutOfRange.
    InclusionProof prove_seq(std::uint64_t pair_seq) const;

    /// Fault-injection hook: XORs one byte of a stored leaf and rehashes.
    void corrupt_leaf(std::size_t index, std::size_t byte_offset, std::uint8_t mask);

    /// Rebuilds a tree from stored parts, e.g. a snapshot or a partner's copy.
    static PeerTransactionTree restore(PairKey key, std::uint64_t epoch, std::uint64_t first_seq,
                                       std::vector<ArchivedEpoch> archived, std::vector<Bytes> leaves,
                                       Hasher hasher = default_hasher());

    Bytes encode() const;
    static PeerTransactionTree decode(ByteView in, Hasher hasher = default_hasher());

private:
    void rehash();

    PairKey key_;
    Hasher hasher_;
    std::uint64_t epoch_ = 0;
    std::uint64_t first_seq_ = 1;
    std::vector<Bytes> leaves_;
    MerkleTree tree_;
    std::vector<ArchivedEpoch> archived_;
};

/// Payer side of the handshake. `pair_active` is the registry's verdict
/// on the pair. Throws NonPositiveAmount, InsufficientBalance, LimitExceeded,
/// NotRegisteredPeers, PeerSuspended.
TransactionProposal propose(const Hasher& hasher, const PartyContext& payer, const PeerTransactionTree& ptt,
                            ClientId payee, Amount amount, Tick timestamp, bool pair_active);

/// Payee side. Throws WrongAddressee, PeerSuspended, DuplicateSequence, NonPositiveAmount.
TransactionPairRecord accept(const Hasher& hasher, const TransactionProposal& proposal, const PartyContext& payee,
                             const PeerTransactionTree& ptt);

struct CommitOutcome {
    enum class Kind { Committed, RootMismatch } kind = Kind::Committed;
    Digest payer_root;
    Digest payee_root;

    bool committed() const noexcept { return kind == Kind::Committed; }
};

/// Both peers append, exchange roots, and keep the leaf only if the roots agree.
CommitOutcome commit(PeerTransactionTree& payer_ptt, PeerTransactionTree& payee_ptt,
                     const TransactionPairRecord& record);

/// Net credit (+) or debit (-) of `self` over the current epoch's leaves.
Amount net_position(const PeerTransactionTree& ptt, ClientId self);
/// Same, including archived epochs.
Amount lifetime_net_position(const PeerTransactionTree& ptt, ClientId self);

/// Archives the current root once both peers have signed it. `signatures`
/// may hold any number of candidates; one valid signature per peer is needed.
/// Throws MissingCounterSignature, EmptyTree.
void reset_epoch(PeerTransactionTree& ptt, const SignatureScheme& scheme, const std::vector<Signature>& signatures,
                 const PublicKey& lo_key, const PublicKey& hi_key);

}  // namespace dmoney
