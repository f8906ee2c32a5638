#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "dmoney/balance_mht.hpp"
#include "dmoney/currency_manager.hpp"
#include "dmoney/integrity_manager.hpp"
#include "dmoney/peer_ledger.hpp"

namespace dmoney {

/// A Currency Client: its pair trees, its balance tree and its private views.
/// The Currency Manager's peer side is a ClientNode with `issuer` set; it
/// keeps pair trees but no balance tree.
class ClientNode {
public:
    ClientNode(ClientId id, const SignatureScheme& scheme, KeyHandle key, bool issuer = false,
               std::size_t mht_order = BalanceMHT::kDefaultOrder, Hasher hasher = default_hasher());

    ClientId id() const noexcept { return id_; }
    bool issuer() const noexcept { return issuer_; }
    KeyHandle key() const noexcept { return key_; }
    PublicKey public_key() const { return scheme_.public_key(key_); }
    const SignatureScheme& scheme() const noexcept { return scheme_; }
    const Hasher& hasher() const noexcept { return hasher_; }

    ClientStatus status() const noexcept { return status_; }
    void set_status(ClientStatus s) noexcept { status_ = s; }
    Amount limit() const noexcept { return limit_; }
    void set_limit(Amount limit) noexcept { limit_ = limit; }

    Amount balance() const;
    Digest mhtr() const { return tree_.root(); }
    PartyContext context() const;

    PeerTransactionTree& ptt(ClientId peer);
    const PeerTransactionTree* find_ptt(PairKey pair) const;
    const std::map<PairKey, PeerTransactionTree>& ptts() const noexcept { return ptts_; }
    /// Current roots of every non-empty pair tree.
    std::map<PairKey, Digest> pttrs() const;

    const BalanceMHT& balance_tree() const noexcept { return tree_; }
    /// Fault hook: swaps in an earlier balance tree.
    void rewind_balance_tree(BalanceMHT earlier) { tree_ = std::move(earlier); }
    const std::vector<LocalView>& views(PairKey pair) const;

    /// Records the committed pair in the balance tree and the local views.
    /// Returns this party's balance report.
    BalanceLeg apply_commit(const TransactionPairRecord& record);
    TransactionReport transaction_report(const TransactionPairRecord& record) const;

    /// Sum of lifetime net positions over all pair trees.
    Amount net_sum() const;
    /// latest balance == net_sum and every balance record names its PTT root.
    bool consistent() const;

    /// Signs the pair's current root for an epoch reset.
    Signature sign_epoch(PairKey pair) const;

    /// Versioned, per-section checksummed container.
    Bytes persist_snapshot() const;
    /// Empty input gives a fresh state. Throws CorruptSnapshot.
    void load_snapshot(ByteView in);
    /// Drops all volatile state.
    void wipe();

    /// Rebuilds every pair tree from the partners' copies, checked against the
    /// Integrity Manager's validated and archived roots, then the balance tree
    /// and views from the records. Throws PartnerRootDisagreement.
    void recover_transactions(const std::map<PairKey, PeerTransactionTree>& partner_copies,
                              const IntegrityManager* arbiter);

private:
    /// Views always; the balance tree only when asked.
    void rebuild_from_ptts(bool rebuild_tree);

    ClientId id_;
    const SignatureScheme& scheme_;
    KeyHandle key_;
    bool issuer_;
    Hasher hasher_;
    ClientStatus status_ = ClientStatus::Active;
    Amount limit_ = kNoLimit;
    std::map<PairKey, PeerTransactionTree> ptts_;
    BalanceMHT tree_;
    std::map<PairKey, std::vector<LocalView>> views_;
};

struct TransactionOutcome {
    CommitOutcome::Kind kind = CommitOutcome::Kind::Committed;
    TransactionPairRecord record;
    /// Peer-to-peer messages on the critical path: proposal, acceptance and
    /// one root each way.
    int messages = 0;
    int manager_messages = 0;
    BalanceLeg payer_leg;
    BalanceLeg payee_leg;
    TransactionReport payer_report;
    TransactionReport payee_report;

    bool committed() const noexcept { return kind == CommitOutcome::Kind::Committed; }
};

/// Runs after both parties commit and before reports are formed.
using BeforeReportHook = std::function<void(ClientNode& payer, ClientNode& payee)>;

/// propose -> accept -> commit between two nodes. Reports are returned for
/// the caller to deliver; nothing here waits on a manager.
TransactionOutcome transact(ClientNode& payer, ClientNode& payee, Amount amount, Tick timestamp, bool pair_active,
                            const BeforeReportHook& before_report = {});

/// Both peers sign the current root and archive the epoch.
void reset_pair_epoch(ClientNode& a, ClientNode& b, PairKey pair);

/// Total outstanding currency minus everyone else's open balance. Throws
/// ManagerUnreachable when `cm` is null and ConservationViolation when the
/// result disagrees with the manager's own record for `self`.
Amount recover_balance(const CurrencyManager* cm, ClientId self);

}  // namespace dmoney
