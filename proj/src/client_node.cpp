#include "dmoney/client_node.hpp"

#include <algorithm>
#include <tuple>

namespace dmoney {

namespace {

constexpr std::uint32_t kSnapshotMagic = 0x44434c4e;  // "DCLN"
constexpr std::uint32_t kSnapshotVersion = 1;

enum SectionKind : std::uint8_t { kHeader = 1, kBalanceTree = 2, kPairTree = 3 };

// Root of the pair tree after each sequence number, across all epochs.
std::map<std::uint64_t, Digest> prefix_roots(const PeerTransactionTree& ptt, const Hasher& hasher) {
    std::map<std::uint64_t, Digest> out;
    auto walk = [&](std::uint64_t first, const std::vector<Bytes>& leaves) {
        MerkleTree t(hasher);
        for (std::size_t i = 0; i < leaves.size(); ++i) {
            t.append(leaves[i]);
            out[first + i] = t.root();
        }
    };
    for (const auto& a : ptt.archived()) walk(a.first_seq, a.leaves);
    walk(ptt.first_seq(), ptt.leaves());
    return out;
}

Digest section_checksum(const Hasher& hasher, std::uint8_t kind, ByteView payload) {
    Bytes buf;
    buf.reserve(payload.size() + 1);
    buf.push_back(kind);
    buf.insert(buf.end(), payload.begin(), payload.end());
    return hasher.raw(buf);
}

}  // namespace

ClientNode::ClientNode(ClientId id, const SignatureScheme& scheme, KeyHandle key, bool issuer, std::size_t mht_order,
                       Hasher hasher)
    : id_(id), scheme_(scheme), key_(key), issuer_(issuer), hasher_(hasher), tree_(mht_order, hasher) {}

Amount ClientNode::balance() const { return issuer_ ? 0 : tree_.latest_balance(); }

PartyContext ClientNode::context() const { return {id_, balance(), limit_, mhtr(), status_, issuer_}; }

PeerTransactionTree& ClientNode::ptt(ClientId peer) {
    auto key = PairKey::of(id_, peer);
    auto it = ptts_.find(key);
    if (it == ptts_.end()) it = ptts_.emplace(key, PeerTransactionTree(key, hasher_)).first;
    return it->second;
}

const PeerTransactionTree* ClientNode::find_ptt(PairKey pair) const {
    auto it = ptts_.find(pair);
    return it == ptts_.end() ? nullptr : &it->second;
}

std::map<PairKey, Digest> ClientNode::pttrs() const {
    std::map<PairKey, Digest> out;
    for (const auto& [pair, t] : ptts_)
        if (auto r = t.root()) out.emplace(pair, *r);
    return out;
}

const std::vector<LocalView>& ClientNode::views(PairKey pair) const {
    static const std::vector<LocalView> kNone;
    auto it = views_.find(pair);
    return it == views_.end() ? kNone : it->second;
}

BalanceLeg ClientNode::apply_commit(const TransactionPairRecord& record) {
    ClientId peer = record.payer == id_ ? record.payee : record.payer;
    auto pair = PairKey::of(id_, peer);
    const auto& t = ptt(peer);
    Digest pttr = t.root().value_or(Digest{});

    BalanceLeg leg;
    leg.client = id_;
    leg.peer = peer;
    leg.pair_seq = record.pair_seq;
    leg.timestamp = record.timestamp;
    leg.delta = record.delta_for(id_);
    leg.prior_mhtr = mhtr();
    leg.peer_provenance = record.payer == id_ ? record.payee_provenance : record.payer_provenance;

    Amount prior = balance();
    if (!issuer_) tree_.insert({record.pair_seq, record.timestamp, peer, leg.delta, prior + leg.delta, pttr});
    views_[pair].push_back(make_local_view(record, id_, prior));
    leg.new_balance = balance();
    leg.new_mhtr = mhtr();
    return leg;
}

TransactionReport ClientNode::transaction_report(const TransactionPairRecord& record) const {
    auto pair = record.pair();
    const auto* t = find_ptt(pair);
    TransactionReport r;
    r.reporter = id_;
    r.pair = pair;
    r.pair_seq = record.pair_seq;
    r.pttr = t && t->root() ? *t->root() : Digest{};
    r.record_digest = hasher_.leaf(record.encode());
    r.timestamp = record.timestamp;
    return r;
}

Amount ClientNode::net_sum() const {
    Amount sum = 0;
    for (const auto& [pair, t] : ptts_) sum += lifetime_net_position(t, id_);
    return sum;
}

bool ClientNode::consistent() const {
    if (issuer_) return true;
    if (balance() != net_sum()) return false;
    std::map<PairKey, std::map<std::uint64_t, Digest>> roots;
    for (const auto& r : tree_.records()) {
        auto pair = PairKey::of(id_, r.peer_id);
        auto [it, fresh] = roots.try_emplace(pair);
        if (fresh)
            if (const auto* t = find_ptt(pair)) it->second = prefix_roots(*t, hasher_);
        auto root = it->second.find(r.pair_seq);
        if (root == it->second.end() || root->second != r.causing_pttr) return false;
    }
    return true;
}

Signature ClientNode::sign_epoch(PairKey pair) const {
    const auto* t = find_ptt(pair);
    if (!t || !t->root()) throw Error(Errc::EmptyTree, "pair " + pair.str());
    return sign_root(scheme_, *t->root(), key_);
}

// ---------------------------------------------------------------------------
// Snapshot

Bytes ClientNode::persist_snapshot() const {
    std::vector<std::pair<std::uint8_t, Bytes>> sections;
    Encoder header;
    header.u64(id_).u8(static_cast<std::uint8_t>(status_)).i64(limit_).u8(issuer_ ? 1 : 0);
    sections.emplace_back(kHeader, std::move(header).bytes());
    sections.emplace_back(kBalanceTree, tree_.snapshot());
    for (const auto& [pair, t] : ptts_) sections.emplace_back(kPairTree, t.encode());

    Encoder e;
    e.u32(kSnapshotMagic).u32(kSnapshotVersion).u32(static_cast<std::uint32_t>(sections.size()));
    for (const auto& [kind, payload] : sections)
        e.u8(kind).blob(payload).digest(section_checksum(hasher_, kind, payload));
    return std::move(e).bytes();
}

void ClientNode::load_snapshot(ByteView in) {
    if (in.empty()) {
        wipe();
        return;
    }
    auto corrupt = [](const std::string& why) { return Error(Errc::CorruptSnapshot, why); };
    std::optional<BalanceMHT> tree;
    std::map<PairKey, PeerTransactionTree> ptts;
    ClientStatus status = ClientStatus::Active;
    Amount limit = kNoLimit;
    bool have_header = false;
    try {
        Decoder d(in);
        if (d.u32() != kSnapshotMagic) throw corrupt("bad magic");
        if (d.u32() != kSnapshotVersion) throw corrupt("unsupported version");
        auto count = d.u32();
        for (std::uint32_t i = 0; i < count; ++i) {
            auto kind = d.u8();
            auto payload = d.blob();
            if (d.digest() != section_checksum(hasher_, kind, payload))
                throw corrupt("checksum mismatch in section " + std::to_string(i));
            switch (kind) {
                case kHeader: {
                    Decoder h(payload);
                    if (h.u64() != id_) throw corrupt("snapshot belongs to another client");
                    auto s = h.u8();
                    if (s > static_cast<std::uint8_t>(ClientStatus::Disenrolled)) throw corrupt("bad status");
                    status = static_cast<ClientStatus>(s);
                    limit = h.i64();
                    if ((h.u8() != 0) != issuer_) throw corrupt("issuer flag mismatch");
                    h.expect_done();
                    have_header = true;
                    break;
                }
                case kBalanceTree: tree = BalanceMHT::load_snapshot(payload, hasher_); break;
                case kPairTree: {
                    auto t = PeerTransactionTree::decode(payload, hasher_);
                    if (!t.key().contains(id_)) throw corrupt("pair tree " + t.key().str() + " is not ours");
                    auto key = t.key();
                    ptts.insert_or_assign(key, std::move(t));
                    break;
                }
                default: throw corrupt("unknown section kind " + std::to_string(kind));
            }
        }
        d.expect_done();
    } catch (const Error& e) {
        if (e.code() == Errc::CorruptSnapshot) throw;
        throw corrupt(e.what());
    }
    if (!have_header || !tree) throw corrupt("missing section");

    status_ = status;
    limit_ = limit;
    tree_ = std::move(*tree);
    ptts_ = std::move(ptts);
    rebuild_from_ptts(false);
}

void ClientNode::wipe() {
    ptts_.clear();
    views_.clear();
    tree_ = BalanceMHT(tree_.order(), hasher_);
}

// ---------------------------------------------------------------------------
// Recovery

void ClientNode::recover_transactions(const std::map<PairKey, PeerTransactionTree>& partner_copies,
                                      const IntegrityManager* arbiter) {
    std::map<PairKey, PeerTransactionTree> rebuilt;
    for (const auto& [pair, copy] : partner_copies) {
        if (!pair.contains(id_)) throw Error(Errc::PartnerRootDisagreement, "copy of " + pair.str() + " is not ours");
        auto t = PeerTransactionTree::decode(copy.encode(), hasher_);
        auto disagree = [&](const std::string& why) {
            return Error(Errc::PartnerRootDisagreement, "pair " + pair.str() + ": " + why);
        };
        for (const auto& a : t.archived()) {
            if (a.leaves.empty() || MerkleTree::build(a.leaves, hasher_).root() != a.root)
                throw disagree("archived epoch " + std::to_string(a.epoch) + " does not hash to its root");
            if (arbiter)
                if (auto archived = arbiter->archived_root(pair, a.epoch); archived && *archived != a.root)
                    throw disagree("archived epoch " + std::to_string(a.epoch) + " differs from the arbiter");
        }
        if (arbiter) {
            auto roots = prefix_roots(t, hasher_);
            if (auto latest = arbiter->latest_validated(pair); latest && !roots.count(latest->pair_seq))
                throw disagree("partner copy is missing validated seq " + std::to_string(latest->pair_seq));
            for (const auto& [seq, root] : roots)
                if (auto v = arbiter->validated_root(pair, seq); v && *v != root)
                    throw disagree("root at seq " + std::to_string(seq) + " differs from the validated root");
        }
        rebuilt.emplace(pair, std::move(t));
    }
    ptts_ = std::move(rebuilt);
    rebuild_from_ptts(true);
}

void ClientNode::rebuild_from_ptts(bool rebuild_tree) {
    struct Entry {
        TransactionPairRecord record;
        Digest root;
    };
    std::vector<Entry> entries;
    for (const auto& [pair, t] : ptts_) {
        auto roots = prefix_roots(t, hasher_);
        auto add = [&](const Bytes& leaf) {
            auto r = TransactionPairRecord::decode(leaf);
            entries.push_back({r, roots.at(r.pair_seq)});
        };
        for (const auto& a : t.archived())
            for (const auto& l : a.leaves) add(l);
        for (const auto& l : t.leaves()) add(l);
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
        return std::tie(x.record.timestamp, x.record.pair_seq) < std::tie(y.record.timestamp, y.record.pair_seq);
    });

    if (rebuild_tree) tree_ = BalanceMHT(tree_.order(), hasher_);
    views_.clear();
    Amount running = 0;
    for (const auto& e : entries) {
        const auto& r = e.record;
        ClientId peer = r.payer == id_ ? r.payee : r.payer;
        views_[r.pair()].push_back(make_local_view(r, id_, running));
        if (issuer_) continue;
        running += r.delta_for(id_);
        if (rebuild_tree) tree_.insert({r.pair_seq, r.timestamp, peer, r.delta_for(id_), running, e.root});
    }
}

// ---------------------------------------------------------------------------
// Workflow

TransactionOutcome transact(ClientNode& payer, ClientNode& payee, Amount amount, Tick timestamp, bool pair_active,
                            const BeforeReportHook& before_report) {
    TransactionOutcome out;
    auto& payer_tree = payer.ptt(payee.id());
    auto& payee_tree = payee.ptt(payer.id());

    auto proposal = propose(payer.hasher(), payer.context(), payer_tree, payee.id(), amount, timestamp, pair_active);
    ++out.messages;
    out.record = accept(payee.hasher(), proposal, payee.context(), payee_tree);
    ++out.messages;
    auto c = commit(payer_tree, payee_tree, out.record);
    out.messages += 2;
    out.kind = c.kind;
    if (!c.committed()) return out;

    out.payer_leg = payer.apply_commit(out.record);
    out.payee_leg = payee.apply_commit(out.record);
    if (before_report) before_report(payer, payee);
    out.payer_report = payer.transaction_report(out.record);
    out.payee_report = payee.transaction_report(out.record);
    return out;
}

void reset_pair_epoch(ClientNode& a, ClientNode& b, PairKey pair) {
    std::vector<Signature> sigs{a.sign_epoch(pair), b.sign_epoch(pair)};
    const auto& lo = a.id() == pair.lo ? a : b;
    const auto& hi = a.id() == pair.lo ? b : a;
    auto lo_key = lo.public_key();
    auto hi_key = hi.public_key();
    reset_epoch(a.ptt(b.id()), a.scheme(), sigs, lo_key, hi_key);
    reset_epoch(b.ptt(a.id()), b.scheme(), sigs, lo_key, hi_key);
}

Amount recover_balance(const CurrencyManager* cm, ClientId self) {
    if (!cm) throw Error(Errc::ManagerUnreachable, "cannot recover balance of " + std::to_string(self));
    Amount others = 0;
    for (auto c : cm->clients())
        if (c != self) others += cm->open_balance(c);
    Amount recovered = cm->total_issued() - cm->total_redeemed() - others;
    Amount recorded = cm->open_balance(self);
    if (recovered != recorded)
        throw Error(Errc::ConservationViolation, "recovered " + std::to_string(recovered) + " but the manager records " +
                                                     std::to_string(recorded));
    return recovered;
}

}  // namespace dmoney
