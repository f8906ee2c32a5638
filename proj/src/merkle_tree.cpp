#include "dmoney/merkle_tree.hpp"

namespace dmoney {

Bytes InclusionProof::encode() const {
    Encoder e;
    e.u64(leaf_index).u32(static_cast<std::uint32_t>(path.size()));
    for (const auto& step : path) e.u8(static_cast<std::uint8_t>(step.side)).digest(step.sibling);
    e.digest(claimed_root);
    return std::move(e).bytes();
}

InclusionProof InclusionProof::decode(ByteView in) {
    Decoder d(in);
    InclusionProof p;
    p.leaf_index = d.u64();
    auto n = d.u32();
    if (n > 64) throw Error(Errc::Malformed, "proof path too long");
    p.path.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        auto side = d.u8();
        if (side > 1) throw Error(Errc::Malformed, "bad side byte");
        p.path.push_back({static_cast<Side>(side), d.digest()});
    }
    p.claimed_root = d.digest();
    d.expect_done();
    return p;
}

MerkleTree MerkleTree::build(const std::vector<Bytes>& payloads, Hasher hasher) {
    if (payloads.empty()) throw Error(Errc::EmptyTree);
    std::vector<Digest> leaves;
    leaves.reserve(payloads.size());
    for (const auto& p : payloads) leaves.push_back(hasher.leaf(p));
    return from_leaf_digests(std::move(leaves), std::move(hasher));
}

MerkleTree MerkleTree::from_leaf_digests(std::vector<Digest> leaves, Hasher hasher) {
    if (leaves.empty()) throw Error(Errc::EmptyTree);
    MerkleTree t(std::move(hasher));
    t.levels_.push_back(std::move(leaves));
    t.rebuild_from_level0();
    return t;
}

void MerkleTree::rebuild_from_level0() {
    levels_.resize(1);
    while (levels_.back().size() > 1) {
        const auto& below = levels_.back();
        std::vector<Digest> up;
        up.reserve((below.size() + 1) / 2);
        for (std::size_t i = 0; i < below.size(); i += 2) {
            up.push_back(i + 1 < below.size() ? hasher_.internal(below[i], below[i + 1]) : below[i]);
        }
        levels_.push_back(std::move(up));
    }
}

void MerkleTree::append(ByteView payload) { append_digest(hasher_.leaf(payload)); }

void MerkleTree::append_digest(const Digest& leaf) {
    if (levels_.empty()) levels_.emplace_back();
    levels_[0].push_back(leaf);
    // Only the rightmost node of each level changes.
    for (std::size_t l = 0; levels_[l].size() > 1; ++l) {
        if (l + 1 == levels_.size()) levels_.emplace_back();
        const auto& cur = levels_[l];
        std::size_t k = (cur.size() - 1) / 2;
        Digest parent = 2 * k + 1 < cur.size() ? hasher_.internal(cur[2 * k], cur[2 * k + 1]) : cur[2 * k];
        auto& up = levels_[l + 1];
        if (k < up.size())
            up[k] = parent;
        else
            up.push_back(parent);
    }
}

MerkleTree MerkleTree::appended(ByteView payload) const {
    MerkleTree copy = *this;
    copy.append(payload);
    return copy;
}

void MerkleTree::pop_back() {
    if (empty()) throw Error(Errc::EmptyTree);
    levels_[0].pop_back();
    if (levels_[0].empty())
        levels_.clear();
    else
        rebuild_from_level0();
}

const std::vector<Digest>& MerkleTree::leaves() const {
    static const std::vector<Digest> kNone;
    return levels_.empty() ? kNone : levels_[0];
}

const Digest& MerkleTree::root() const {
    if (empty()) throw Error(Errc::EmptyTree);
    return levels_.back().front();
}

InclusionProof MerkleTree::prove(std::size_t leaf_index) const {
    if (leaf_index >= size())
        throw Error(Errc::IndexOutOfRange, std::to_string(leaf_index) + " >= " + std::to_string(size()));
    InclusionProof proof;
    proof.leaf_index = leaf_index;
    std::size_t idx = leaf_index;
    for (std::size_t l = 0; l + 1 < levels_.size(); ++l) {
        const auto& level = levels_[l];
        std::size_t sibling = idx ^ 1u;
        if (sibling < level.size())
            proof.path.push_back({sibling < idx ? Side::Left : Side::Right, level[sibling]});
        idx /= 2;
    }
    proof.claimed_root = root();
    return proof;
}

bool verify_leaf_digest(const Hasher& hasher, const Digest& leaf, const InclusionProof& proof,
                        const Digest& expected_root) {
    Digest acc = leaf;
    for (const auto& step : proof.path)
        acc = step.side == Side::Left ? hasher.internal(step.sibling, acc) : hasher.internal(acc, step.sibling);
    return acc == expected_root;
}

bool verify(const Hasher& hasher, ByteView payload, const InclusionProof& proof, const Digest& expected_root) {
    if (payload.empty()) return false;
    return verify_leaf_digest(hasher, hasher.leaf(payload), proof, expected_root);
}

}  // namespace dmoney
