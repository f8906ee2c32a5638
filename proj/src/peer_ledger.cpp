#include "dmoney/peer_ledger.hpp"

#include <algorithm>

namespace dmoney {

Amount TransactionPairRecord::delta_for(ClientId self) const noexcept {
    if (self == payee) return amount;
    if (self == payer) return -amount;
    return 0;
}

Bytes TransactionPairRecord::encode() const {
    Encoder e;
    e.u64(pair_seq).u64(timestamp).u64(payer).u64(payee).i64(amount);
    e.digest(payer_prior_commit).digest(payer_new_commit);
    e.digest(payee_prior_commit).digest(payee_new_commit);
    e.digest(payer_provenance).digest(payee_provenance);
    return std::move(e).bytes();
}

TransactionPairRecord TransactionPairRecord::decode(ByteView in) {
    if (in.size() != kEncodedSize) throw Error(Errc::Malformed, "pair record must be 232 bytes");
    Decoder d(in);
    TransactionPairRecord r;
    r.pair_seq = d.u64();
    r.timestamp = d.u64();
    r.payer = d.u64();
    r.payee = d.u64();
    r.amount = d.i64();
    r.payer_prior_commit = d.digest();
    r.payer_new_commit = d.digest();
    r.payee_prior_commit = d.digest();
    r.payee_new_commit = d.digest();
    r.payer_provenance = d.digest();
    r.payee_provenance = d.digest();
    return r;
}

std::string leg_id(std::uint64_t pair_seq, bool payer_leg) {
    return std::to_string(pair_seq) + (payer_leg ? ".1" : ".2");
}

LocalView make_local_view(const TransactionPairRecord& record, ClientId self, Amount own_prior_balance) {
    return LocalView{record.pair_seq, leg_id(record.pair_seq, self == record.payer), own_prior_balance,
                     own_prior_balance + record.delta_for(self), record};
}

PeerTransactionTree::PeerTransactionTree(PairKey key, Hasher hasher)
    : key_(key), hasher_(hasher), tree_(std::move(hasher)) {}

std::vector<TransactionPairRecord> PeerTransactionTree::records() const {
    std::vector<TransactionPairRecord> out;
    out.reserve(leaves_.size());
    for (const auto& leaf : leaves_) out.push_back(TransactionPairRecord::decode(leaf));
    return out;
}

std::optional<Digest> PeerTransactionTree::root() const {
    if (tree_.empty()) return std::nullopt;
    return tree_.root();
}

void PeerTransactionTree::append(const TransactionPairRecord& record) {
    if (record.pair_seq != next_seq())
        throw Error(Errc::DuplicateSequence, "pair " + key_.str() + " expects seq " + std::to_string(next_seq()) +
                                                 ", got " + std::to_string(record.pair_seq));
    if (record.pair() != key_) throw Error(Errc::NotRegisteredPeers, "record does not belong to pair " + key_.str());
    leaves_.push_back(record.encode());
    tree_.append(leaves_.back());
}

void PeerTransactionTree::rollback_last() {
    if (leaves_.empty()) throw Error(Errc::EmptyTree);
    leaves_.pop_back();
    tree_.pop_back();
}

void PeerTransactionTree::archive_current() {
    if (leaves_.empty()) throw Error(Errc::EmptyTree, "nothing to archive in pair " + key_.str());
    archived_.push_back(ArchivedEpoch{epoch_, tree_.root(), first_seq_, std::move(leaves_)});
    first_seq_ += archived_.back().leaves.size();
    leaves_.clear();
    tree_ = MerkleTree(hasher_);
    ++epoch_;
}

InclusionProof PeerTransactionTree::prove_seq(std::uint64_t pair_seq) const {
    if (pair_seq < first_seq_ || pair_seq >= next_seq())
        throw Error(Errc::IndexOutOfRange, "seq " + std::to_string(pair_seq) + " not in current epoch");
    return tree_.prove(pair_seq - first_seq_);
}

void PeerTransactionTree::corrupt_leaf(std::size_t index, std::size_t byte_offset, std::uint8_t mask) {
    if (index >= leaves_.size() || byte_offset >= leaves_[index].size()) throw Error(Errc::IndexOutOfRange);
    leaves_[index][byte_offset] ^= mask;
    rehash();
}

void PeerTransactionTree::rehash() {
    tree_ = MerkleTree(hasher_);
    for (const auto& leaf : leaves_) tree_.append(leaf);
}

PeerTransactionTree PeerTransactionTree::restore(PairKey key, std::uint64_t epoch, std::uint64_t first_seq,
                                                 std::vector<ArchivedEpoch> archived, std::vector<Bytes> leaves,
                                                 Hasher hasher) {
    PeerTransactionTree t(key, std::move(hasher));
    t.epoch_ = epoch;
    t.first_seq_ = first_seq;
    t.archived_ = std::move(archived);
    t.leaves_ = std::move(leaves);
    t.rehash();
    return t;
}

Bytes PeerTransactionTree::encode() const {
    Encoder e;
    e.u64(key_.lo).u64(key_.hi).u64(epoch_).u64(first_seq_);
    e.u32(static_cast<std::uint32_t>(archived_.size()));
    for (const auto& a : archived_) {
        e.u64(a.epoch).digest(a.root).u64(a.first_seq).u32(static_cast<std::uint32_t>(a.leaves.size()));
        for (const auto& l : a.leaves) e.blob(l);
    }
    e.u32(static_cast<std::uint32_t>(leaves_.size()));
    for (const auto& l : leaves_) e.blob(l);
    return std::move(e).bytes();
}

PeerTransactionTree PeerTransactionTree::decode(ByteView in, Hasher hasher) {
    Decoder d(in);
    PairKey key{d.u64(), d.u64()};
    auto epoch = d.u64();
    auto first = d.u64();
    std::vector<ArchivedEpoch> archived(d.u32());
    for (auto& a : archived) {
        a.epoch = d.u64();
        a.root = d.digest();
        a.first_seq = d.u64();
        a.leaves.resize(d.u32());
        for (auto& l : a.leaves) l = d.blob();
    }
    std::vector<Bytes> leaves(d.u32());
    for (auto& l : leaves) l = d.blob();
    d.expect_done();
    return restore(key, epoch, first, std::move(archived), std::move(leaves), std::move(hasher));
}

namespace {

Digest side_commit(const Hasher& h, const PartyContext& p, std::uint64_t seq, Amount balance) {
    return p.issuer ? h.commit_balance(p.id, seq, 0) : h.commit_balance(p.id, seq, balance);
}

}  // namespace

TransactionProposal propose(const Hasher& hasher, const PartyContext& payer, const PeerTransactionTree& ptt,
                            ClientId payee, Amount amount, Tick timestamp, bool pair_active) {
    if (amount <= 0) throw Error(Errc::NonPositiveAmount, std::to_string(amount));
    if (payer.id == payee || ptt.key() != PairKey::of(payer.id, payee))
        throw Error(Errc::NotRegisteredPeers, "tree " + ptt.key().str() + " does not join the parties");
    if (payer.status != ClientStatus::Active) throw Error(Errc::PeerSuspended, "payer " + std::to_string(payer.id));
    if (!pair_active) throw Error(Errc::NotRegisteredPeers, ptt.key().str());
    if (!payer.issuer) {
        if (amount > payer.balance)
            throw Error(Errc::InsufficientBalance,
                        std::to_string(amount) + " > balance " + std::to_string(payer.balance));
        if (amount > payer.limit)
            throw Error(Errc::LimitExceeded, std::to_string(amount) + " > limit " + std::to_string(payer.limit));
    }
    TransactionProposal p;
    p.pair_seq = ptt.next_seq();
    p.timestamp = timestamp;
    p.payer = payer.id;
    p.payee = payee;
    p.amount = amount;
    p.payer_prior_commit = side_commit(hasher, payer, p.pair_seq, payer.balance);
    p.payer_new_commit = side_commit(hasher, payer, p.pair_seq, payer.balance - amount);
    p.payer_provenance = payer.provenance;
    return p;
}

TransactionPairRecord accept(const Hasher& hasher, const TransactionProposal& proposal, const PartyContext& payee,
                             const PeerTransactionTree& ptt) {
    if (proposal.payee != payee.id)
        throw Error(Errc::WrongAddressee, "proposal for " + std::to_string(proposal.payee) + " delivered to " +
                                              std::to_string(payee.id));
    if (payee.status != ClientStatus::Active) throw Error(Errc::PeerSuspended, "payee " + std::to_string(payee.id));
    if (proposal.amount <= 0) throw Error(Errc::NonPositiveAmount, std::to_string(proposal.amount));
    if (ptt.key() != PairKey::of(proposal.payer, proposal.payee))
        throw Error(Errc::NotRegisteredPeers, "tree " + ptt.key().str() + " does not join the parties");
    if (proposal.pair_seq != ptt.next_seq())
        throw Error(Errc::DuplicateSequence, "proposal seq " + std::to_string(proposal.pair_seq) + ", expected " +
                                                 std::to_string(ptt.next_seq()));

    TransactionPairRecord r;
    r.pair_seq = proposal.pair_seq;
    r.timestamp = proposal.timestamp;
    r.payer = proposal.payer;
    r.payee = proposal.payee;
    r.amount = proposal.amount;
    r.payer_prior_commit = proposal.payer_prior_commit;
    r.payer_new_commit = proposal.payer_new_commit;
    r.payee_prior_commit = side_commit(hasher, payee, r.pair_seq, payee.balance);
    r.payee_new_commit = side_commit(hasher, payee, r.pair_seq, payee.balance + proposal.amount);
    r.payer_provenance = proposal.payer_provenance;
    r.payee_provenance = payee.provenance;
    return r;
}

CommitOutcome commit(PeerTransactionTree& payer_ptt, PeerTransactionTree& payee_ptt,
                     const TransactionPairRecord& record) {
    // Replays are refused before either tree is touched.
    if (record.pair_seq != payer_ptt.next_seq() || record.pair_seq != payee_ptt.next_seq())
        throw Error(Errc::DuplicateSequence, "seq " + std::to_string(record.pair_seq));

    payer_ptt.append(record);
    payee_ptt.append(record);
    CommitOutcome out;
    out.payer_root = *payer_ptt.root();
    out.payee_root = *payee_ptt.root();
    if (out.payer_root != out.payee_root) {
        payer_ptt.rollback_last();
        payee_ptt.rollback_last();
        out.kind = CommitOutcome::Kind::RootMismatch;
    }
    return out;
}

namespace {

Amount sum_leaves(const std::vector<Bytes>& leaves, ClientId self) {
    Amount net = 0;
    for (const auto& leaf : leaves) net += TransactionPairRecord::decode(leaf).delta_for(self);
    return net;
}

}  // namespace

Amount net_position(const PeerTransactionTree& ptt, ClientId self) { return sum_leaves(ptt.leaves(), self); }

Amount lifetime_net_position(const PeerTransactionTree& ptt, ClientId self) {
    Amount net = net_position(ptt, self);
    for (const auto& a : ptt.archived()) net += sum_leaves(a.leaves, self);
    return net;
}

void reset_epoch(PeerTransactionTree& ptt, const SignatureScheme& scheme, const std::vector<Signature>& signatures,
                 const PublicKey& lo_key, const PublicKey& hi_key) {
    auto root = ptt.root();
    if (!root) throw Error(Errc::EmptyTree, "pair " + ptt.key().str() + " has no current epoch");
    auto signed_by = [&](const PublicKey& key) {
        return std::any_of(signatures.begin(), signatures.end(),
                           [&](const Signature& s) { return scheme.verify(*root, s, key); });
    };
    if (!signed_by(lo_key) || !signed_by(hi_key))
        throw Error(Errc::MissingCounterSignature, "pair " + ptt.key().str());
    ptt.archive_current();
}

}  // namespace dmoney
