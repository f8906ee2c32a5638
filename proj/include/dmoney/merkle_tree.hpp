#pragma once

#include <cstdint>
#include <vector>

#include "dmoney/hash.hpp"

namespace dmoney {

enum class Side : std::uint8_t { Left = 0, Right = 1 };

/// One step of an authentication path: the sibling digest and which side of
/// the running hash it sits on.
struct ProofStep {
    Side side;
    Digest sibling;

    bool operator==(const ProofStep&) const = default;
};

struct InclusionProof {
    std::uint64_t leaf_index = 0;
    std::vector<ProofStep> path;
    Digest claimed_root;

    bool operator==(const InclusionProof&) const = default;

    /// leaf_index(8) || path length(4) || (side(1) || digest(32))* || root(32)
    Bytes encode() const;
    static InclusionProof decode(ByteView in);
};

/// Binary Merkle tree over leaf payloads. Odd nodes are promoted unchanged to
/// the next level, so a tree of n leaves has height ceil(log2 n).
class MerkleTree {
public:
    explicit MerkleTree(Hasher hasher = default_hasher()) : hasher_(std::move(hasher)) {}

    /// Throws EmptyTree for an empty list.
    static MerkleTree build(const std::vector<Bytes>& payloads, Hasher hasher = default_hasher());
    static MerkleTree from_leaf_digests(std::vector<Digest> leaves, Hasher hasher = default_hasher());

    void append(ByteView payload);
    void append_digest(const Digest& leaf);
    [[nodiscard]] MerkleTree appended(ByteView payload) const;
    /// Drops the last leaf. Used to roll back a failed commit.
    void pop_back();

    bool empty() const noexcept { return levels_.empty() || levels_[0].empty(); }
    std::size_t size() const noexcept { return empty() ? 0 : levels_[0].size(); }
    const std::vector<Digest>& leaves() const;
    const std::vector<std::vector<Digest>>& levels() const noexcept { return levels_; }
    const Hasher& hasher() const noexcept { return hasher_; }

    /// Throws EmptyTree.
    const Digest& root() const;
    /// Throws IndexOutOfRange.
    InclusionProof prove(std::size_t leaf_index) const;

private:
    void rebuild_from_level0();

    Hasher hasher_;
    std::vector<std::vector<Digest>> levels_;
};

/// Folds hash_leaf(payload) along the proof; true iff the result equals expected_root.
bool verify(const Hasher& hasher, ByteView payload, const InclusionProof& proof, const Digest& expected_root);
bool verify_leaf_digest(const Hasher& hasher, const Digest& leaf, const InclusionProof& proof,
                        const Digest& expected_root);

}  // namespace dmoney
