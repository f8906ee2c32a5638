#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dmoney/peer_ledger.hpp"
#include "dmoney/signature.hpp"

namespace dmoney {

/// One row version of the valid-time balance table. Rows are never edited
/// (apart from remarks); closing an interval appends a new version.
struct TemporalRow {
    std::uint64_t txn_stamp = 0;
    ClientId client = 0;
    Amount balance = 0;
    Tick valid_from = 0;
    Tick valid_to = kForever;
    Digest provenance;
    std::string remarks;

    bool operator==(const TemporalRow&) const = default;
};

class TemporalBalanceTable {
public:
    struct Interval {
        Tick from = 0;
        Tick to = kForever;
        Amount balance = 0;
        Digest provenance;
        std::size_t opening_version = 0;
    };

    /// Closes the client's open interval (if any) at `at` under `close_stamp`
    /// and opens a new one under `open_stamp`.
    void close(ClientId client, std::uint64_t close_stamp, Tick at);
    void open(ClientId client, std::uint64_t open_stamp, Amount balance, Tick from, const Digest& provenance);

    const Interval* open_interval(ClientId client) const;
    /// Balance valid at `at`; 0 before the client's first row.
    Amount balance_at(ClientId client, Tick at) const;
    Amount sum_at(Tick at) const;
    Amount sum_open() const;
    std::vector<ClientId> clients() const;
    const std::vector<Interval>& intervals(ClientId client) const;

    const std::vector<TemporalRow>& versions() const noexcept { return versions_; }
    void annotate(std::size_t version, const std::string& note);

    using TickLabel = std::function<std::string(Tick)>;
    /// Delimited rows: Transaction Time-stamp, Client ID, Valid Balance,
    /// Valid From, Valid To, Remarks, Provenance Root.
    std::string export_delimited(char sep = '\t', const TickLabel& label = {}) const;

    /// magic "DTBL" || version(4) || row count(8) || rows. Intervals are
    /// replayed from the rows on decode. Throws Malformed.
    Bytes encode() const;
    static TemporalBalanceTable decode(ByteView in);

private:
    std::vector<TemporalRow> versions_;
    std::map<ClientId, std::vector<Interval>> intervals_;
};

/// A client's balance report for one committed pair.
struct BalanceLeg {
    ClientId client = 0;
    ClientId peer = 0;
    std::uint64_t pair_seq = 0;
    Tick timestamp = 0;
    Amount delta = 0;
    Amount new_balance = 0;
    Digest prior_mhtr;
    Digest new_mhtr;
    Digest peer_provenance;

    bool operator==(const BalanceLeg&) const = default;
    PairKey pair() const { return PairKey::of(client, peer); }
};

/// The client's MHTR transition for an issuance or redemption, carried in
/// the commit exchange with the manager.
struct ClientLink {
    std::uint64_t pair_seq = 0;
    Digest prior_mhtr;
    Digest new_mhtr;
};

struct ClientEntry {
    PublicKey key;
    ClientStatus status = ClientStatus::Active;
    Amount limit = kNoLimit;
    std::string zone;
};

enum class PairState { Pending, Active };

struct PairRegistration {
    PairKey key;
    bool consent_lo = false;
    bool consent_hi = false;
    PairState state = PairState::Pending;
};

struct ConservationVerdict {
    bool holds = true;
    Amount sum = 0;
    Amount expected = 0;
    Amount discrepancy() const noexcept { return sum - expected; }
};

/// Things the manager noticed while processing; the simulator logs them.
struct ManagerEvent {
    enum class Kind { Settled, StaleProvenance, LegMismatch, ConservationViolation, Suspended };
    Kind kind;
    std::vector<ClientId> subjects;
    PairKey pair;
    std::uint64_t pair_seq = 0;
    Amount discrepancy = 0;
    std::string detail;
};

struct ReportOutcome {
    enum class Kind { Pending, Settled, Duplicate, StaleProvenance } kind = Kind::Pending;
};

struct IssuanceReceipt {
    ClientId client = 0;
    Amount amount = 0;
    std::uint64_t pair_seq = 0;
    bool settled = false;
};
using RedemptionReceipt = IssuanceReceipt;

struct ReparationRecord {
    PairKey pair;
    std::uint64_t original_seq = 0;
    ClientId payer = 0;  // the original payee
    ClientId payee = 0;  // the original payer
    Amount amount = 0;
};

/// Summary kept for a settled pair. Balances and ids only; the manager never
/// stores transaction record bodies.
struct SettledTransfer {
    ClientId payer = 0;
    ClientId payee = 0;
    Amount amount = 0;
    Tick timestamp = 0;
    std::vector<std::size_t> versions;
};

/// The Payment-Bank role: registry, supply, temporal balances, conservation.
class CurrencyManager {
public:
    explicit CurrencyManager(Hasher hasher = default_hasher()) : hasher_(std::move(hasher)) {}

    // Registry -------------------------------------------------------------
    ClientId enroll(PublicKey key, Amount limit = kNoLimit, std::string zone = {});
    PairRegistration register_pair(ClientId a, ClientId b, bool consent_a, bool consent_b);
    bool pair_active(ClientId a, ClientId b) const;
    void suspend(ClientId client, const std::string& cause);
    void reinstate(ClientId client);
    void disenroll(ClientId client);
    const ClientEntry& client(ClientId id) const;
    bool is_enrolled(ClientId id) const;
    /// Enrollment order.
    const std::vector<ClientId>& clients() const noexcept { return order_; }

    // Supply ---------------------------------------------------------------
    /// Throws UnknownClient, NonPositiveAmount, StaleProvenance.
    IssuanceReceipt issue(ClientId client, Amount amount, Tick timestamp, const ClientLink& link);
    /// Throws UnknownClient, NonPositiveAmount, PendingSettlement,
    /// InsufficientBalance, StaleProvenance.
    RedemptionReceipt redeem(ClientId client, Amount amount, Tick timestamp, const ClientLink& link);

    // Reporting ------------------------------------------------------------
    /// Throws UnknownClient.
    ReportOutcome report_balance(const BalanceLeg& leg);
    ConservationVerdict check_conservation(Tick at) const;
    ConservationVerdict check_conservation_now() const { return check_conservation(kForever - 1); }

    /// Throws UnknownTransaction.
    ReparationRecord repair(PairKey pair, std::uint64_t pair_seq);

    // Views ----------------------------------------------------------------
    Amount total_issued() const noexcept { return issued_; }
    Amount total_redeemed() const noexcept { return redeemed_; }
    Amount open_balance(ClientId client) const;
    /// The latest MHTR the client's settled history reached.
    Digest settled_mhtr(ClientId client) const;
    std::size_t pending_legs(ClientId client) const;
    std::size_t pending_legs() const;
    const TemporalBalanceTable& table() const noexcept { return table_; }
    const std::map<std::pair<PairKey, std::uint64_t>, SettledTransfer>& settled() const noexcept { return settled_; }

    std::vector<ManagerEvent> drain_events();
    void set_auto_suspend(bool on) noexcept { auto_suspend_ = on; }

private:
    struct Link {
        BalanceLeg leg;
        bool with_manager = false;
    };
    struct Chain {
        Digest head;                               // settled MHTR
        std::map<Digest, Link> pending;            // by prior MHTR
        std::set<Digest> used_priors;              // every prior ever accepted
        std::map<std::pair<PairKey, std::uint64_t>, BalanceLeg> seen;
    };

    ClientEntry& entry(ClientId id);
    Chain& chain(ClientId id);
    bool accept_link(const Link& link, ReportOutcome& out);
    std::size_t settle_ready();
    bool try_settle(ClientId client);
    void settle_single(const Link& link);
    void settle_pair(const Link& a, const Link& b);
    void record_settlement(const BalanceLeg& payer_leg, const BalanceLeg& payee_leg, std::vector<std::size_t> versions);
    void after_settlement(const std::vector<ClientId>& subjects, PairKey pair, std::uint64_t seq);

    Hasher hasher_;
    std::map<ClientId, ClientEntry> registry_;
    std::vector<ClientId> order_;
    std::map<PairKey, PairRegistration> pairs_;
    ClientId next_id_ = 1;

    Amount issued_ = 0;
    Amount redeemed_ = 0;
    std::vector<std::pair<Tick, Amount>> supply_changes_;  // (valid tick, +issued / -redeemed)

    TemporalBalanceTable table_;
    std::uint64_t next_stamp_ = 1;
    std::map<ClientId, Chain> chains_;
    std::map<std::pair<PairKey, std::uint64_t>, SettledTransfer> settled_;
    std::map<PairKey, std::vector<ReparationRecord>> reparations_;
    std::vector<ManagerEvent> events_;
    bool auto_suspend_ = true;
};

}  // namespace dmoney
