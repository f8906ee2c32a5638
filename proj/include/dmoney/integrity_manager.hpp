#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dmoney/attestation.hpp"
#include "dmoney/peer_ledger.hpp"

namespace dmoney {

/// A peer's post-commit statement of its PTT root for one pair sequence.
struct TransactionReport {
    ClientId reporter = 0;
    PairKey pair;
    std::uint64_t pair_seq = 0;
    Digest pttr;
    Digest record_digest;
    Tick timestamp = 0;

    bool operator==(const TransactionReport&) const = default;
};

struct Alert {
    enum class Kind {
        RootMismatch,
        MissingCounterpartReport,
        BalanceCrossCheckFailure,
        StaleProvenance,
        ConservationViolation,
        GridMismatch,
    };
    Kind kind = Kind::RootMismatch;
    std::vector<ClientId> subjects;
    PairKey pair;
    std::uint64_t pair_seq = 0;
    std::vector<Digest> digests;
    std::string note;
    Tick raised_at = 0;
};

std::string_view to_string(Alert::Kind kind) noexcept;

struct ValidationOutcome {
    enum class Kind { Pending, Validated, Alerted } kind = Kind::Pending;
    std::optional<Alert> alert;
};

/// Square system-state grid: client MHTRs on the diagonal, pair PTTRs above
/// it, an empty-cell marker everywhere else.
struct MerkleHashGrid {
    std::uint64_t epoch = 0;
    std::vector<ClientId> clients;
    std::vector<std::vector<Digest>> cells;
    std::vector<Digest> row_hashes;
    std::vector<Digest> column_hashes;
    Digest grid_hash;
    Signature signature;

    bool operator==(const MerkleHashGrid&) const = default;

    std::size_t size() const noexcept { return clients.size(); }

    /// Matrix text: one "row" line per client with hex cells ("-" for empty),
    /// then row hashes, column hashes, grid hash and signature.
    std::string to_text(const Hasher& hasher = default_hasher()) const;
    static MerkleHashGrid from_text(const std::string& text, const Hasher& hasher = default_hasher());
};

struct GridVerdict {
    bool matches = true;
    std::vector<std::size_t> rows;     // mismatched row indices
    std::vector<std::size_t> columns;  // mismatched column indices
    std::vector<std::pair<std::size_t, std::size_t>> cells;
};

/// Builds the cell matrix in the grid's client order.
std::vector<std::vector<Digest>> grid_cells(const std::vector<ClientId>& clients,
                                            const std::map<ClientId, Digest>& mhtrs,
                                            const std::map<PairKey, Digest>& pttrs,
                                            const Hasher& hasher = default_hasher());
/// Fills row, column and grid hashes from the cells.
void hash_grid(MerkleHashGrid& grid, const Hasher& hasher = default_hasher());

/// The verifier role. Holds roots and record digests, never balances.
class IntegrityManager {
public:
    struct Config {
        Tick reporting_deadline = 10;
        bool keep_full_records = false;
    };

    IntegrityManager(const SignatureScheme& scheme, KeyHandle key, Config config, Hasher hasher = default_hasher());
    IntegrityManager(const SignatureScheme& scheme, KeyHandle key) : IntegrityManager(scheme, key, Config{}) {}

    void admit_client(ClientId id);
    void admit_pair(PairKey pair);
    PublicKey public_key() const { return scheme_.public_key(key_); }

    /// Throws UnknownReporter, UnregisteredPair.
    ValidationOutcome ingest_report(const TransactionReport& report, Tick now);
    /// Raises MissingCounterpartReport for reports still unmatched after the
    /// deadline. Returns the new alerts.
    std::vector<Alert> expire(Tick now);

    /// With grace > 0 a mismatch only alerts once it has persisted that long.
    ValidationOutcome cross_check_balance(ClientId client, const Digest& from_client, const Digest& from_manager,
                                          Tick now = 0, Tick grace = 0);

    /// Throws NotQuiescent, EmptyGrid.
    MerkleHashGrid capture_grid(std::uint64_t epoch, const std::vector<ClientId>& clients,
                                const std::map<ClientId, Digest>& mhtrs, const std::map<PairKey, Digest>& pttrs,
                                bool quiescent = true) const;
    /// Throws BadSignature when the signature does not cover the grid.
    GridVerdict verify_grid(const MerkleHashGrid& grid, const std::map<ClientId, Digest>& mhtrs,
                            const std::map<PairKey, Digest>& pttrs) const;
    static GridVerdict verify_grid(const SignatureScheme& scheme, const PublicKey& key, const MerkleHashGrid& grid,
                                   const std::map<ClientId, Digest>& mhtrs, const std::map<PairKey, Digest>& pttrs,
                                   const Hasher& hasher = default_hasher());

    struct ValidatedRoot {
        std::uint64_t pair_seq = 0;
        Digest root;
    };
    std::optional<ValidatedRoot> latest_validated(PairKey pair) const;
    std::optional<Digest> validated_root(PairKey pair, std::uint64_t pair_seq) const;
    bool is_validated(PairKey pair, std::uint64_t pair_seq) const;
    std::size_t validated_count() const noexcept { return validated_total_; }

    /// Stores the latest validated root of the pair as the root of `epoch`.
    void archive(PairKey pair, std::uint64_t epoch);
    std::optional<Digest> archived_root(PairKey pair, std::uint64_t epoch) const;
    void store_record(PairKey pair, std::uint64_t pair_seq, const Digest& record_digest,
                      std::optional<Bytes> full_record = std::nullopt);
    struct StoredRecord {
        Digest digest;
        std::optional<Bytes> body;
    };
    const StoredRecord* stored_record(PairKey pair, std::uint64_t pair_seq) const;

    /// Signed statement of the latest validated root of a pair. The caller
    /// supplies the epoch window the root covers. Throws UnknownTransaction.
    Attestation attest_pair(PairKey pair, std::uint64_t epoch, std::uint64_t first_seq, Tick now) const;

    const std::vector<Alert>& alerts() const noexcept { return alerts_; }
    /// Alerts raised since the previous drain.
    std::vector<Alert> drain_alerts();
    std::size_t pending_reports() const noexcept { return pending_.size(); }

private:
    using SeqKey = std::pair<PairKey, std::uint64_t>;
    struct Pending {
        TransactionReport report;
        Tick deadline = 0;
    };
    struct CrossCheck {
        Tick first_seen = 0;
    };

    ValidationOutcome raise(Alert alert);
    ValidationOutcome compare(const TransactionReport& a, const TransactionReport& b, Tick now);

    const SignatureScheme& scheme_;
    KeyHandle key_;
    Config config_;
    Hasher hasher_;

    std::set<ClientId> clients_;
    std::set<PairKey> pairs_;
    std::map<SeqKey, Pending> pending_;
    std::map<SeqKey, TransactionReport> expired_;
    std::map<SeqKey, std::set<ClientId>> resolved_;  // who reported a settled sequence
    std::map<PairKey, std::map<std::uint64_t, Digest>> validated_;
    std::size_t validated_total_ = 0;
    std::map<PairKey, std::map<std::uint64_t, Digest>> archived_;
    std::map<SeqKey, StoredRecord> records_;
    std::map<ClientId, CrossCheck> cross_checks_;
    std::vector<Alert> alerts_;
    std::size_t drained_ = 0;
};

}  // namespace dmoney
