#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "dmoney/hash.hpp"

namespace dmoney {

/// Records are ordered by (timestamp, pair_seq).
struct BalanceKey {
    Tick timestamp = 0;
    std::uint64_t pair_seq = 0;

    auto operator<=>(const BalanceKey&) const = default;

    static constexpr BalanceKey min() { return {0, 0}; }
    static constexpr BalanceKey max() {
        return {std::numeric_limits<Tick>::max(), std::numeric_limits<std::uint64_t>::max()};
    }
};

struct BalanceChangeRecord {
    std::uint64_t pair_seq = 0;
    Tick timestamp = 0;
    ClientId peer_id = 0;
    Amount delta = 0;
    Amount new_balance = 0;
    Digest causing_pttr;

    static constexpr std::size_t kEncodedSize = 5 * 8 + 32;

    BalanceKey key() const noexcept { return {timestamp, pair_seq}; }
    bool operator==(const BalanceChangeRecord&) const = default;

    /// pair_seq || timestamp || peer_id || delta || new_balance || causing_pttr
    Bytes encode() const;
    static BalanceChangeRecord decode(ByteView in);
};

/// Verification object for a key-range query: the tree pruned to the leaves
/// holding the answer and its two boundary records. Everything else appears
/// only as digests.
struct RangeVO {
    struct Slot {
        enum class Kind : std::uint8_t { Concealed = 0, Boundary = 1, Returned = 2 };
        Kind kind = Kind::Concealed;
        Digest digest;               // Concealed
        BalanceChangeRecord record;  // Boundary

        bool operator==(const Slot&) const = default;
    };

    struct Node {
        enum class Kind : std::uint8_t { Opaque = 0, Internal = 1, Leaf = 2 };
        Kind kind = Kind::Opaque;
        Digest hash;                    // Opaque
        std::vector<BalanceKey> keys;   // Internal
        std::vector<Node> children;     // Internal
        std::vector<Slot> slots;        // Leaf

        bool operator==(const Node&) const = default;
    };

    BalanceKey lo;
    BalanceKey hi;
    bool empty_tree = false;
    Node root;

    bool operator==(const RangeVO&) const = default;

    /// Number of Returned slots, i.e. how many records the answer must carry.
    std::size_t returned_count() const;
    /// Adversary hook: replaces the n-th Returned slot by a Concealed digest.
    void conceal_returned(std::size_t n, const Digest& digest);

    Bytes encode() const;
    static RangeVO decode(ByteView in);
};

/// Outcome of checking a range answer. Freshness is decided by the caller's
/// choice of trusted root; see verify_range().
struct RangeCheck {
    bool correct = false;
    bool complete = false;
};

/// B+ tree of a client's balance-change records with a hash in every node.
/// Internal nodes hold only separator keys and child links; records live in
/// leaves, which are chained left to right.
class BalanceMHT {
public:
    static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    static constexpr std::size_t kDefaultOrder = 8;

    struct Node {
        bool leaf = true;
        std::vector<BalanceKey> keys;  // internal: separators, one fewer than children
        std::vector<std::size_t> children;
        std::vector<BalanceChangeRecord> records;
        std::size_t next_leaf = kNone;
        Digest hash;
    };

    /// `order` is the maximum fan-out (3..64); nodes hold at most order-1 keys.
    explicit BalanceMHT(std::size_t order = kDefaultOrder, Hasher hasher = default_hasher());

    /// Append-ordered insert. Throws NonMonotonicKey, NegativeBalance,
    /// InconsistentBalance (new_balance must equal the running sum).
    void insert(const BalanceChangeRecord& record);

    /// The MHTR; H(0x03) when empty.
    Digest root() const;
    Amount latest_balance() const;
    std::optional<BalanceKey> max_key() const;

    std::size_t size() const noexcept { return count_; }
    bool empty() const noexcept { return count_ == 0; }
    std::size_t order() const noexcept { return order_; }
    std::size_t height() const;
    const Hasher& hasher() const noexcept { return hasher_; }

    /// Leaf-chain traversal in key order.
    std::vector<BalanceChangeRecord> records() const;

    std::size_t root_index() const noexcept { return root_; }
    const Node& node(std::size_t index) const { return nodes_.at(index); }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t first_leaf() const;

    /// Throws InvertedRange when lo > hi.
    std::pair<std::vector<BalanceChangeRecord>, RangeVO> range_query(BalanceKey lo, BalanceKey hi) const;

    Digest record_digest(const BalanceChangeRecord& r) const { return hasher_.leaf(r.encode()); }
    Digest leaf_hash(const std::vector<Digest>& record_digests) const;
    Digest internal_hash(const std::vector<BalanceKey>& keys, const std::vector<Digest>& child_hashes) const;
    Digest empty_root() const { return hasher_.marker(tag::kEmptyBalanceTree); }

    /// magic "DMHT" || version(4) || fanout(4) || count(8) || mhtr(32) || records
    Bytes snapshot() const;
    /// Throws CorruptSnapshot on any decode error or MHTR mismatch.
    static BalanceMHT load_snapshot(ByteView in, Hasher hasher = default_hasher());

private:
    void rehash(std::size_t index);
    RangeVO::Node prune(std::size_t index, BalanceKey lo, BalanceKey hi, const std::optional<BalanceKey>& pred,
                        const std::optional<BalanceKey>& succ, bool& has_content) const;

    std::size_t order_;
    Hasher hasher_;
    std::vector<Node> nodes_;
    std::size_t root_ = kNone;
    std::size_t last_leaf_ = kNone;
    std::size_t count_ = 0;
};

/// Correctness and completeness of a range answer against `trusted_root`.
RangeCheck check_range(const Hasher& hasher, const std::vector<BalanceChangeRecord>& records, const RangeVO& vo,
                       const Digest& trusted_root);
/// True iff the answer is correct and complete against `trusted_root`.
/// Callers get freshness by passing the latest root registered with the
/// Currency Manager.
bool verify_range(const Hasher& hasher, const std::vector<BalanceChangeRecord>& records, const RangeVO& vo,
                  const Digest& trusted_root);

}  // namespace dmoney
