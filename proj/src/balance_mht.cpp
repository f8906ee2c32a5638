#include "dmoney/balance_mht.hpp"

#include <algorithm>
#include <stdexcept>

namespace dmoney {

namespace {

constexpr std::uint32_t kSnapshotMagic = 0x444d4854;  // "DMHT"
constexpr std::uint32_t kSnapshotVersion = 1;
constexpr int kMaxVoDepth = 64;

void encode_key(Encoder& e, const BalanceKey& k) { e.u64(k.timestamp).u64(k.pair_seq); }
BalanceKey decode_key(Decoder& d) {
    BalanceKey k;
    k.timestamp = d.u64();
    k.pair_seq = d.u64();
    return k;
}

}  // namespace

Bytes BalanceChangeRecord::encode() const {
    Encoder e;
    e.u64(pair_seq).u64(timestamp).u64(peer_id).i64(delta).i64(new_balance).digest(causing_pttr);
    return std::move(e).bytes();
}

BalanceChangeRecord BalanceChangeRecord::decode(ByteView in) {
    if (in.size() != kEncodedSize) throw Error(Errc::Malformed, "balance record must be 72 bytes");
    Decoder d(in);
    BalanceChangeRecord r;
    r.pair_seq = d.u64();
    r.timestamp = d.u64();
    r.peer_id = d.u64();
    r.delta = d.i64();
    r.new_balance = d.i64();
    r.causing_pttr = d.digest();
    return r;
}

// ---------------------------------------------------------------------------
// RangeVO

namespace {

void count_returned(const RangeVO::Node& n, std::size_t& acc) {
    for (const auto& s : n.slots) acc += s.kind == RangeVO::Slot::Kind::Returned;
    for (const auto& c : n.children) count_returned(c, acc);
}

bool conceal_nth(RangeVO::Node& n, std::size_t& remaining, const Digest& d) {
    for (auto& s : n.slots) {
        if (s.kind != RangeVO::Slot::Kind::Returned) continue;
        if (remaining == 0) {
            s.kind = RangeVO::Slot::Kind::Concealed;
            s.digest = d;
            return true;
        }
        --remaining;
    }
    for (auto& c : n.children)
        if (conceal_nth(c, remaining, d)) return true;
    return false;
}

void encode_node(Encoder& e, const RangeVO::Node& n) {
    e.u8(static_cast<std::uint8_t>(n.kind));
    switch (n.kind) {
        case RangeVO::Node::Kind::Opaque:
            e.digest(n.hash);
            break;
        case RangeVO::Node::Kind::Internal:
            e.u32(static_cast<std::uint32_t>(n.keys.size()));
            for (const auto& k : n.keys) encode_key(e, k);
            e.u32(static_cast<std::uint32_t>(n.children.size()));
            for (const auto& c : n.children) encode_node(e, c);
            break;
        case RangeVO::Node::Kind::Leaf:
            e.u32(static_cast<std::uint32_t>(n.slots.size()));
            for (const auto& s : n.slots) {
                e.u8(static_cast<std::uint8_t>(s.kind));
                if (s.kind == RangeVO::Slot::Kind::Concealed) e.digest(s.digest);
                if (s.kind == RangeVO::Slot::Kind::Boundary) e.raw(s.record.encode());
            }
            break;
    }
}

RangeVO::Node decode_node(Decoder& d, int depth) {
    if (depth > kMaxVoDepth) throw Error(Errc::Malformed, "verification object nested too deeply");
    RangeVO::Node n;
    auto kind = d.u8();
    if (kind > 2) throw Error(Errc::Malformed, "bad node kind");
    n.kind = static_cast<RangeVO::Node::Kind>(kind);
    switch (n.kind) {
        case RangeVO::Node::Kind::Opaque:
            n.hash = d.digest();
            break;
        case RangeVO::Node::Kind::Internal: {
            auto nk = d.u32();
            if (nk > d.remaining() / 16) throw Error(Errc::Malformed, "key count");
            for (std::uint32_t i = 0; i < nk; ++i) n.keys.push_back(decode_key(d));
            auto nc = d.u32();
            if (nc > d.remaining()) throw Error(Errc::Malformed, "child count");
            for (std::uint32_t i = 0; i < nc; ++i) n.children.push_back(decode_node(d, depth + 1));
            break;
        }
        case RangeVO::Node::Kind::Leaf: {
            auto ns = d.u32();
            if (ns > d.remaining()) throw Error(Errc::Malformed, "slot count");
            for (std::uint32_t i = 0; i < ns; ++i) {
                RangeVO::Slot s;
                auto sk = d.u8();
                if (sk > 2) throw Error(Errc::Malformed, "bad slot kind");
                s.kind = static_cast<RangeVO::Slot::Kind>(sk);
                if (s.kind == RangeVO::Slot::Kind::Concealed) s.digest = d.digest();
                if (s.kind == RangeVO::Slot::Kind::Boundary)
                    s.record = BalanceChangeRecord::decode(d.raw(BalanceChangeRecord::kEncodedSize));
                n.slots.push_back(std::move(s));
            }
            break;
        }
    }
    return n;
}

}  // namespace

std::size_t RangeVO::returned_count() const {
    std::size_t n = 0;
    count_returned(root, n);
    return n;
}

void RangeVO::conceal_returned(std::size_t n, const Digest& digest) {
    if (!conceal_nth(root, n, digest)) throw Error(Errc::IndexOutOfRange, "no such returned slot");
}

Bytes RangeVO::encode() const {
    Encoder e;
    encode_key(e, lo);
    encode_key(e, hi);
    e.u8(empty_tree ? 1 : 0);
    if (!empty_tree) encode_node(e, root);
    return std::move(e).bytes();
}

RangeVO RangeVO::decode(ByteView in) {
    Decoder d(in);
    RangeVO vo;
    vo.lo = decode_key(d);
    vo.hi = decode_key(d);
    vo.empty_tree = d.u8() != 0;
    if (!vo.empty_tree) vo.root = decode_node(d, 0);
    d.expect_done();
    return vo;
}

// ---------------------------------------------------------------------------
// BalanceMHT

BalanceMHT::BalanceMHT(std::size_t order, Hasher hasher) : order_(order), hasher_(std::move(hasher)) {
    if (order < 3 || order > 64) throw std::invalid_argument("B+ order must be within 3..64");
}

Digest BalanceMHT::leaf_hash(const std::vector<Digest>& record_digests) const {
    Encoder e;
    for (const auto& d : record_digests) e.digest(d);
    return hasher_.tagged(tag::kBalanceLeafNode, e.bytes());
}

Digest BalanceMHT::internal_hash(const std::vector<BalanceKey>& keys, const std::vector<Digest>& child_hashes) const {
    Encoder e;
    e.u32(static_cast<std::uint32_t>(keys.size()));
    for (const auto& k : keys) encode_key(e, k);
    for (const auto& d : child_hashes) e.digest(d);
    return hasher_.tagged(tag::kBalanceInternalNode, e.bytes());
}

void BalanceMHT::rehash(std::size_t index) {
    auto& n = nodes_[index];
    if (n.leaf) {
        std::vector<Digest> ds;
        ds.reserve(n.records.size());
        for (const auto& r : n.records) ds.push_back(record_digest(r));
        n.hash = leaf_hash(ds);
    } else {
        std::vector<Digest> ds;
        ds.reserve(n.children.size());
        for (auto c : n.children) ds.push_back(nodes_[c].hash);
        n.hash = internal_hash(n.keys, ds);
    }
}

std::optional<BalanceKey> BalanceMHT::max_key() const {
    if (last_leaf_ == kNone) return std::nullopt;
    return nodes_[last_leaf_].records.back().key();
}

Amount BalanceMHT::latest_balance() const {
    if (last_leaf_ == kNone) return 0;
    return nodes_[last_leaf_].records.back().new_balance;
}

void BalanceMHT::insert(const BalanceChangeRecord& record) {
    if (record.new_balance < 0) throw Error(Errc::NegativeBalance, std::to_string(record.new_balance));
    if (auto mk = max_key(); mk && record.key() <= *mk)
        throw Error(Errc::NonMonotonicKey, "(" + std::to_string(record.timestamp) + ", " +
                                               std::to_string(record.pair_seq) + ") not after current maximum");
    if (record.new_balance != latest_balance() + record.delta)
        throw Error(Errc::InconsistentBalance, std::to_string(latest_balance()) + " + " +
                                                   std::to_string(record.delta) + " != " +
                                                   std::to_string(record.new_balance));

    if (root_ == kNone) {
        nodes_.push_back(Node{});
        nodes_.back().records.push_back(record);
        root_ = last_leaf_ = 0;
        rehash(0);
        count_ = 1;
        return;
    }

    std::vector<std::size_t> path;
    std::size_t idx = root_;
    while (!nodes_[idx].leaf) {
        path.push_back(idx);
        idx = nodes_[idx].children.back();
    }
    nodes_[idx].records.push_back(record);
    ++count_;

    std::optional<std::pair<BalanceKey, std::size_t>> pending;
    if (nodes_[idx].records.size() > order_ - 1) {
        std::size_t keep = (order_ + 1) / 2;
        Node right;
        right.leaf = true;
        right.records.assign(nodes_[idx].records.begin() + static_cast<std::ptrdiff_t>(keep),
                             nodes_[idx].records.end());
        nodes_[idx].records.resize(keep);
        right.next_leaf = nodes_[idx].next_leaf;
        nodes_.push_back(std::move(right));
        std::size_t r = nodes_.size() - 1;
        nodes_[idx].next_leaf = r;
        last_leaf_ = r;
        rehash(idx);
        rehash(r);
        pending = {nodes_[r].records.front().key(), r};
    } else {
        rehash(idx);
    }

    for (auto it = path.rbegin(); it != path.rend(); ++it) {
        std::size_t p = *it;
        if (pending) {
            nodes_[p].keys.push_back(pending->first);
            nodes_[p].children.push_back(pending->second);
            pending.reset();
            if (nodes_[p].children.size() > order_) {
                std::size_t c = nodes_[p].children.size();
                std::size_t left = (c + 1) / 2;
                Node right;
                right.leaf = false;
                right.children.assign(nodes_[p].children.begin() + static_cast<std::ptrdiff_t>(left),
                                      nodes_[p].children.end());
                right.keys.assign(nodes_[p].keys.begin() + static_cast<std::ptrdiff_t>(left), nodes_[p].keys.end());
                BalanceKey up = nodes_[p].keys[left - 1];
                nodes_[p].keys.resize(left - 1);
                nodes_[p].children.resize(left);
                nodes_.push_back(std::move(right));
                std::size_t r = nodes_.size() - 1;
                rehash(p);
                rehash(r);
                pending = {up, r};
                continue;
            }
        }
        rehash(p);
    }

    if (pending) {
        Node top;
        top.leaf = false;
        top.keys = {pending->first};
        top.children = {root_, pending->second};
        nodes_.push_back(std::move(top));
        root_ = nodes_.size() - 1;
        rehash(root_);
    }
}

Digest BalanceMHT::root() const { return root_ == kNone ? empty_root() : nodes_[root_].hash; }

std::size_t BalanceMHT::height() const {
    if (root_ == kNone) return 0;
    std::size_t h = 1;
    for (std::size_t i = root_; !nodes_[i].leaf; i = nodes_[i].children.front()) ++h;
    return h;
}

std::size_t BalanceMHT::first_leaf() const {
    if (root_ == kNone) return kNone;
    std::size_t i = root_;
    while (!nodes_[i].leaf) i = nodes_[i].children.front();
    return i;
}

std::vector<BalanceChangeRecord> BalanceMHT::records() const {
    std::vector<BalanceChangeRecord> out;
    out.reserve(count_);
    for (std::size_t i = first_leaf(); i != kNone; i = nodes_[i].next_leaf)
        out.insert(out.end(), nodes_[i].records.begin(), nodes_[i].records.end());
    return out;
}

RangeVO::Node BalanceMHT::prune(std::size_t index, BalanceKey lo, BalanceKey hi,
                                const std::optional<BalanceKey>& pred, const std::optional<BalanceKey>& succ,
                                bool& has_content) const {
    const auto& n = nodes_[index];
    RangeVO::Node out;
    has_content = false;
    if (n.leaf) {
        out.kind = RangeVO::Node::Kind::Leaf;
        for (const auto& r : n.records) {
            RangeVO::Slot s;
            auto k = r.key();
            if (k >= lo && k <= hi) {
                s.kind = RangeVO::Slot::Kind::Returned;
            } else if ((pred && k == *pred) || (succ && k == *succ)) {
                s.kind = RangeVO::Slot::Kind::Boundary;
                s.record = r;
            } else {
                s.digest = record_digest(r);
            }
            has_content |= s.kind != RangeVO::Slot::Kind::Concealed;
            out.slots.push_back(std::move(s));
        }
    } else {
        out.kind = RangeVO::Node::Kind::Internal;
        out.keys = n.keys;
        for (auto c : n.children) {
            bool child_content = false;
            out.children.push_back(prune(c, lo, hi, pred, succ, child_content));
            has_content |= child_content;
        }
    }
    if (!has_content) {
        RangeVO::Node opaque;
        opaque.hash = n.hash;
        return opaque;
    }
    return out;
}

std::pair<std::vector<BalanceChangeRecord>, RangeVO> BalanceMHT::range_query(BalanceKey lo, BalanceKey hi) const {
    if (hi < lo) throw Error(Errc::InvertedRange);
    RangeVO vo;
    vo.lo = lo;
    vo.hi = hi;
    std::vector<BalanceChangeRecord> hits;
    if (root_ == kNone) {
        vo.empty_tree = true;
        return {hits, vo};
    }
    std::optional<BalanceKey> pred, succ;
    for (const auto& r : records()) {
        auto k = r.key();
        if (k < lo)
            pred = k;
        else if (k <= hi)
            hits.push_back(r);
        else if (!succ)
            succ = k;
    }
    bool content = false;
    vo.root = prune(root_, lo, hi, pred, succ, content);
    return {std::move(hits), std::move(vo)};
}

Bytes BalanceMHT::snapshot() const {
    Encoder e;
    e.u32(kSnapshotMagic).u32(kSnapshotVersion).u32(static_cast<std::uint32_t>(order_)).u64(count_).digest(root());
    for (const auto& r : records()) e.raw(r.encode());
    return std::move(e).bytes();
}

BalanceMHT BalanceMHT::load_snapshot(ByteView in, Hasher hasher) {
    try {
        Decoder d(in);
        if (d.u32() != kSnapshotMagic) throw Error(Errc::CorruptSnapshot, "bad magic");
        if (d.u32() != kSnapshotVersion) throw Error(Errc::CorruptSnapshot, "unsupported version");
        auto order = d.u32();
        if (order < 3 || order > 64) throw Error(Errc::CorruptSnapshot, "bad fanout");
        auto count = d.u64();
        auto stored = d.digest();
        if (count != d.remaining() / BalanceChangeRecord::kEncodedSize ||
            d.remaining() % BalanceChangeRecord::kEncodedSize != 0)
            throw Error(Errc::CorruptSnapshot, "record count does not match payload");
        BalanceMHT tree(order, std::move(hasher));
        for (std::uint64_t i = 0; i < count; ++i)
            tree.insert(BalanceChangeRecord::decode(d.raw(BalanceChangeRecord::kEncodedSize)));
        if (tree.root() != stored) throw Error(Errc::CorruptSnapshot, "stored root does not match records");
        return tree;
    } catch (const Error& e) {
        if (e.code() == Errc::CorruptSnapshot) throw;
        throw Error(Errc::CorruptSnapshot, e.what());
    }
}

// ---------------------------------------------------------------------------
// Verification

namespace {

struct Item {
    enum class Kind { Hidden, Boundary, Returned } kind;
    BalanceKey key;
};

struct Walker {
    const Hasher& hasher;
    const BalanceMHT& shape;  // used only for its node-hash helpers
    const std::vector<BalanceChangeRecord>& records;
    std::size_t next = 0;
    std::vector<Item> items;
    bool well_formed = true;

    Digest visit(const RangeVO::Node& n) {
        switch (n.kind) {
            case RangeVO::Node::Kind::Opaque:
                items.push_back({Item::Kind::Hidden, {}});
                return n.hash;
            case RangeVO::Node::Kind::Internal: {
                if (n.children.empty() || n.keys.size() + 1 != n.children.size()) well_formed = false;
                std::vector<Digest> ds;
                for (const auto& c : n.children) ds.push_back(visit(c));
                return shape.internal_hash(n.keys, ds);
            }
            case RangeVO::Node::Kind::Leaf: {
                std::vector<Digest> ds;
                for (const auto& s : n.slots) {
                    switch (s.kind) {
                        case RangeVO::Slot::Kind::Concealed:
                            items.push_back({Item::Kind::Hidden, {}});
                            ds.push_back(s.digest);
                            break;
                        case RangeVO::Slot::Kind::Boundary:
                            items.push_back({Item::Kind::Boundary, s.record.key()});
                            ds.push_back(hasher.leaf(s.record.encode()));
                            break;
                        case RangeVO::Slot::Kind::Returned:
                            if (next >= records.size()) {
                                well_formed = false;
                                ds.push_back(Digest{});
                                items.push_back({Item::Kind::Returned, {}});
                                break;
                            }
                            items.push_back({Item::Kind::Returned, records[next].key()});
                            ds.push_back(hasher.leaf(records[next].encode()));
                            ++next;
                            break;
                    }
                }
                return shape.leaf_hash(ds);
            }
        }
        well_formed = false;
        return {};
    }
};

bool contiguous(const std::vector<Item>& items, BalanceKey lo, BalanceKey hi) {
    std::size_t first = items.size(), last = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].kind == Item::Kind::Hidden) continue;
        first = std::min(first, i);
        last = i;
    }
    if (first == items.size()) return false;

    bool left_boundary = items[first].kind == Item::Kind::Boundary && items[first].key < lo;
    bool right_boundary = items[last].kind == Item::Kind::Boundary && items[last].key > hi &&
                          (last != first || !left_boundary);
    if (!left_boundary && first != 0) return false;
    if (!right_boundary && last != items.size() - 1) return false;

    for (std::size_t i = first; i <= last; ++i) {
        const auto& it = items[i];
        if (it.kind == Item::Kind::Hidden) return false;
        if (it.kind == Item::Kind::Boundary) {
            bool is_left = i == first && left_boundary;
            bool is_right = i == last && right_boundary;
            if (!is_left && !is_right) return false;
        } else if (it.key < lo || it.key > hi) {
            return false;
        }
        if (i > first && !(items[i - 1].key < it.key)) return false;
    }
    return true;
}

}  // namespace

RangeCheck check_range(const Hasher& hasher, const std::vector<BalanceChangeRecord>& records, const RangeVO& vo,
                       const Digest& trusted_root) {
    RangeCheck out;
    if (vo.empty_tree) {
        out.correct = records.empty() && trusted_root == hasher.marker(tag::kEmptyBalanceTree);
        out.complete = records.empty();
        return out;
    }
    if (vo.hi < vo.lo) return out;
    BalanceMHT shape(BalanceMHT::kDefaultOrder, hasher);
    Walker w{hasher, shape, records, 0, {}, true};
    Digest root = w.visit(vo.root);
    if (!w.well_formed || w.next != records.size()) return out;
    out.correct = root == trusted_root;
    out.complete = contiguous(w.items, vo.lo, vo.hi);
    return out;
}

bool verify_range(const Hasher& hasher, const std::vector<BalanceChangeRecord>& records, const RangeVO& vo,
                  const Digest& trusted_root) {
    auto c = check_range(hasher, records, vo, trusted_root);
    return c.correct && c.complete;
}

}  // namespace dmoney
