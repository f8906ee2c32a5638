#include "dmoney/data_client.hpp"

#include <algorithm>

#include "dmoney/error.hpp"

namespace dmoney {

Grant authorize(const CurrencyManager& cm, std::uint64_t data_client, ClientId subject, std::set<PairKey> pairs,
                bool balance_history) {
    if (subject == kCurrencyManagerId || !cm.is_enrolled(subject))
        throw Error(Errc::UnknownSubject, "client " + std::to_string(subject) + " is not enrolled");
    for (const auto& p : pairs)
        if (!p.contains(subject)) throw Error(Errc::ScopeViolation, "pair " + p.str() + " does not involve subject");
    return Grant{data_client, subject, std::move(pairs), balance_history};
}

namespace {

constexpr std::uint8_t kMaxKind = 2;

}  // namespace

Bytes VerificationObject::encode() const {
    Encoder e;
    e.u8(static_cast<std::uint8_t>(kind));
    if (kind == Kind::TransactionInclusion) {
        Encoder head;
        head.u64(pair.lo).u64(pair.hi).u64(seq_lo).u64(seq_hi);
        e.blob(head.bytes());
        Encoder recs;
        recs.u32(static_cast<std::uint32_t>(records.size()));
        for (const auto& r : records) recs.blob(r);
        e.blob(recs.bytes());
        Encoder prs;
        prs.u32(static_cast<std::uint32_t>(proofs.size()));
        for (const auto& p : proofs) prs.blob(p.encode());
        e.blob(prs.bytes());
    } else {
        Encoder recs;
        recs.u32(static_cast<std::uint32_t>(balance_records.size()));
        for (const auto& r : balance_records) recs.blob(r.encode());
        e.blob(recs.bytes());
        e.blob(range.encode());
    }
    e.blob(attestation.encode());
    return std::move(e).bytes();
}

VerificationObject VerificationObject::decode(ByteView in) {
    Decoder d(in);
    VerificationObject vo;
    auto k = d.u8();
    if (k == 0 || k > kMaxKind) throw Error(Errc::Malformed, "unknown verification object kind");
    vo.kind = static_cast<Kind>(k);
    if (vo.kind == Kind::TransactionInclusion) {
        auto head_bytes = d.blob();
        Decoder head(head_bytes);
        vo.pair.lo = head.u64();
        vo.pair.hi = head.u64();
        vo.seq_lo = head.u64();
        vo.seq_hi = head.u64();
        head.expect_done();
        auto rec_bytes = d.blob();
        Decoder recs(rec_bytes);
        for (auto n = recs.u32(); n > 0; --n) vo.records.push_back(recs.blob());
        recs.expect_done();
        auto proof_bytes = d.blob();
        Decoder prs(proof_bytes);
        for (auto n = prs.u32(); n > 0; --n) vo.proofs.push_back(InclusionProof::decode(prs.blob()));
        prs.expect_done();
    } else {
        auto rec_bytes = d.blob();
        Decoder recs(rec_bytes);
        for (auto n = recs.u32(); n > 0; --n) vo.balance_records.push_back(BalanceChangeRecord::decode(recs.blob()));
        recs.expect_done();
        vo.range = RangeVO::decode(d.blob());
    }
    vo.attestation = Attestation::decode(d.blob());
    d.expect_done();
    return vo;
}

void VerificationObject::omit_record(std::size_t n) {
    if (kind == Kind::TransactionInclusion) {
        if (n >= records.size()) throw Error(Errc::IndexOutOfRange, "no record to omit");
        records.erase(records.begin() + static_cast<std::ptrdiff_t>(n));
        proofs.erase(proofs.begin() + static_cast<std::ptrdiff_t>(n));
        return;
    }
    if (n >= balance_records.size()) throw Error(Errc::IndexOutOfRange, "no record to omit");
    auto digest = default_hasher().leaf(balance_records[n].encode());
    balance_records.erase(balance_records.begin() + static_cast<std::ptrdiff_t>(n));
    range.conceal_returned(n, digest);
}

Attestation attest_balance_root(const CurrencyManager& cm, const SignatureScheme& scheme, KeyHandle cm_key,
                                ClientId client, Tick now) {
    if (!cm.is_enrolled(client)) throw Error(Errc::UnknownClient, "client " + std::to_string(client));
    Attestation a;
    a.kind = Attestation::Kind::BalanceRoot;
    a.subject = PairKey{client, client};
    a.count = cm.table().intervals(client).size();
    a.root = cm.settled_mhtr(client);
    a.issued_at = now;
    return attest(scheme, cm_key, a);
}

VerificationObject query_transactions(const Grant& grant, const ClientNode& subject, const IntegrityManager& im,
                                      PairKey pair, std::uint64_t seq_lo, std::uint64_t seq_hi, Tick now) {
    if (grant.subject != subject.id() || !grant.allows_pair(pair))
        throw Error(Errc::ScopeViolation, "pair " + pair.str() + " is outside the grant");
    const auto* ptt = subject.find_ptt(pair);
    if (ptt == nullptr || ptt->empty()) throw Error(Errc::UnknownTransaction, "no records for " + pair.str());
    return query_transactions(grant, subject, im.attest_pair(pair, ptt->epoch(), ptt->first_seq(), now), pair,
                              seq_lo, seq_hi);
}

VerificationObject query_transactions(const Grant& grant, const ClientNode& subject, const Attestation& pair_statement,
                                      PairKey pair, std::uint64_t seq_lo, std::uint64_t seq_hi) {
    if (grant.subject != subject.id() || !grant.allows_pair(pair))
        throw Error(Errc::ScopeViolation, "pair " + pair.str() + " is outside the grant");
    if (seq_lo > seq_hi) throw Error(Errc::InvertedRange, "seq_lo > seq_hi");
    const auto* ptt = subject.find_ptt(pair);
    if (ptt == nullptr || ptt->empty()) throw Error(Errc::UnknownTransaction, "no records for " + pair.str());

    VerificationObject vo;
    vo.kind = VerificationObject::Kind::TransactionInclusion;
    vo.pair = pair;
    vo.seq_lo = seq_lo;
    vo.seq_hi = seq_hi;
    vo.attestation = pair_statement;

    auto count = std::min<std::size_t>(vo.attestation.count, ptt->size());
    if (count == 0) return vo;
    std::vector<Bytes> prefix(ptt->leaves().begin(), ptt->leaves().begin() + static_cast<std::ptrdiff_t>(count));
    auto tree = MerkleTree::build(prefix, subject.hasher());
    auto first = ptt->first_seq();
    for (std::uint64_t seq = std::max(seq_lo, first); seq <= seq_hi && seq < first + count; ++seq) {
        vo.records.push_back(prefix[seq - first]);
        vo.proofs.push_back(tree.prove(seq - first));
    }
    return vo;
}

VerificationObject query_balances(const Grant& grant, const ClientNode& subject, const Attestation& manager_statement,
                                  BalanceKey lo, BalanceKey hi) {
    if (grant.subject != subject.id() || !grant.balance_history)
        throw Error(Errc::ScopeViolation, "balance history is outside the grant");
    VerificationObject vo;
    vo.kind = VerificationObject::Kind::BalanceRange;
    auto [records, range] = subject.balance_tree().range_query(lo, hi);
    vo.balance_records = std::move(records);
    vo.range = std::move(range);
    vo.attestation = manager_statement;
    return vo;
}

namespace {

bool same_window(const Attestation& a, const Attestation& b) {
    return a.kind == b.kind && a.subject == b.subject && a.epoch == b.epoch && a.first_seq == b.first_seq &&
           a.count == b.count && a.root == b.root;
}

}  // namespace

Verdict verify_vo(const SignatureScheme& scheme, const VerificationObject& vo, const AttestingKeys& keys,
                  const Attestation& latest, const Hasher& hasher) {
    Verdict v;
    const auto& a = vo.attestation;
    const bool pair_kind = vo.kind == VerificationObject::Kind::TransactionInclusion;
    const auto& key = pair_kind ? keys.integrity_manager : keys.currency_manager;
    const auto want = pair_kind ? Attestation::Kind::PairRoot : Attestation::Kind::BalanceRoot;
    const bool signed_ok = a.kind == want && verify_attestation(scheme, a, key, hasher);

    v.fresh = signed_ok && latest.kind == want && verify_attestation(scheme, latest, key, hasher) &&
              same_window(a, latest);

    if (!pair_kind) {
        auto check = check_range(hasher, vo.balance_records, vo.range, a.root);
        v.correct = signed_ok && a.subject.lo == a.subject.hi && check.correct;
        v.complete = signed_ok && check.complete;
        return v;
    }

    bool correct = signed_ok && a.subject == vo.pair && vo.records.size() == vo.proofs.size();
    std::vector<std::uint64_t> positions;
    for (std::size_t i = 0; correct && i < vo.records.size(); ++i) {
        const auto& proof = vo.proofs[i];
        if (proof.leaf_index >= a.count || !verify(hasher, vo.records[i], proof, a.root)) {
            correct = false;
            break;
        }
        try {
            auto rec = TransactionPairRecord::decode(vo.records[i]);
            correct = rec.pair() == vo.pair && rec.pair_seq == a.first_seq + proof.leaf_index;
        } catch (const Error&) {
            correct = false;
        }
    }
    v.correct = correct;

    for (const auto& p : vo.proofs) positions.push_back(a.first_seq + p.leaf_index);
    std::vector<std::uint64_t> expected;
    if (a.count > 0 && vo.seq_lo <= vo.seq_hi) {
        auto last = a.first_seq + a.count - 1;
        for (auto s = std::max(vo.seq_lo, a.first_seq); s <= std::min(vo.seq_hi, last); ++s) expected.push_back(s);
    }
    v.complete = signed_ok && a.subject == vo.pair && positions == expected;
    return v;
}

}  // namespace dmoney
