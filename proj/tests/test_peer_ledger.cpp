#include <gtest/gtest.h>

#include "dmoney/peer_ledger.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace dmoney;
using testutil::expect_errc;

namespace {

const Hasher& H = default_hasher();

PartyContext party(ClientId id, Amount balance) {
    PartyContext p;
    p.id = id;
    p.balance = balance;
    p.provenance = H.marker(tag::kEmptyBalanceTree);
    return p;
}

struct Pair {
    PeerTransactionTree payer_side{PairKey::of(2, 1)};
    PeerTransactionTree payee_side{PairKey::of(2, 1)};
};

TransactionPairRecord transfer(Pair& pair, ClientId from, Amount from_bal, ClientId to, Amount to_bal, Amount amount,
                               Tick ts) {
    auto& payer_tree = from == 2 ? pair.payer_side : pair.payee_side;
    auto& payee_tree = from == 2 ? pair.payee_side : pair.payer_side;
    auto proposal = propose(H, party(from, from_bal), payer_tree, to, amount, ts, true);
    auto record = accept(H, proposal, party(to, to_bal), payee_tree);
    auto outcome = commit(payer_tree, payee_tree, record);
    EXPECT_TRUE(outcome.committed());
    return record;
}

}  // namespace

TEST(PairRecord, CanonicalLayoutIsBitExact) {
    TransactionPairRecord r;
    r.pair_seq = 10;
    r.timestamp = 77;
    r.payer = 2;
    r.payee = 1;
    r.amount = 500;
    std::mt19937_64 rng(1);
    for (Digest* d : {&r.payer_prior_commit, &r.payer_new_commit, &r.payee_prior_commit, &r.payee_new_commit,
                      &r.payer_provenance, &r.payee_provenance})
        *d = oracle::random_digest(rng);

    Bytes expected;
    for (std::uint64_t v : {10ull, 77ull, 2ull, 1ull, 500ull}) oracle::put_be(expected, v);
    for (const Digest* d : {&r.payer_prior_commit, &r.payer_new_commit, &r.payee_prior_commit, &r.payee_new_commit,
                            &r.payer_provenance, &r.payee_provenance})
        oracle::put(expected, *d);
    EXPECT_EQ(r.encode(), expected);
    EXPECT_EQ(r.encode().size(), TransactionPairRecord::kEncodedSize);
    EXPECT_EQ(TransactionPairRecord::decode(expected), r);
}

TEST(LegId, PayerDotOnePayeeDotTwo) {
    EXPECT_EQ(leg_id(10, true), "10.1");
    EXPECT_EQ(leg_id(10, false), "10.2");
}

TEST(Propose, CommitsOverNewPayerBalance) {
    PeerTransactionTree t(PairKey::of(1, 2));
    auto p = propose(H, party(2, 2000), t, 1, 500, 5, true);
    EXPECT_EQ(p.pair_seq, 1u);
    EXPECT_EQ(p.payer_prior_commit, oracle::commit_balance(2, 1, 2000));
    EXPECT_EQ(p.payer_new_commit, oracle::commit_balance(2, 1, 1500));
}

TEST(Propose, Rejections) {
    PeerTransactionTree t(PairKey::of(1, 2));
    expect_errc(Errc::NonPositiveAmount, [&] { propose(H, party(2, 2000), t, 1, 0, 5, true); });
    expect_errc(Errc::InsufficientBalance, [&] { propose(H, party(2, 2000), t, 1, 2001, 5, true); });
    EXPECT_NO_THROW(propose(H, party(2, 2000), t, 1, 2000, 5, true));
    auto limited = party(2, 2000);
    limited.limit = 100;
    expect_errc(Errc::LimitExceeded, [&] { propose(H, limited, t, 1, 101, 5, true); });
    expect_errc(Errc::NotRegisteredPeers, [&] { propose(H, party(2, 2000), t, 1, 10, 5, false); });
    expect_errc(Errc::NotRegisteredPeers, [&] { propose(H, party(2, 2000), t, 3, 10, 5, true); });
    auto suspended = party(2, 2000);
    suspended.status = ClientStatus::Suspended;
    expect_errc(Errc::PeerSuspended, [&] { propose(H, suspended, t, 1, 10, 5, true); });
}

TEST(Accept, FillsPayeeSideAndEncodesIdentically) {
    PeerTransactionTree payer_tree(PairKey::of(1, 2)), payee_tree(PairKey::of(1, 2));
    auto p = propose(H, party(2, 2000), payer_tree, 1, 500, 5, true);
    auto r = accept(H, p, party(1, 1000), payee_tree);
    EXPECT_EQ(r.payee_prior_commit, oracle::commit_balance(1, 1, 1000));
    EXPECT_EQ(r.payee_new_commit, oracle::commit_balance(1, 1, 1500));
    // The payer re-derives the record from its proposal plus the payee's fields.
    auto copy = TransactionPairRecord::decode(r.encode());
    EXPECT_EQ(copy.encode(), r.encode());
}

TEST(Accept, Rejections) {
    PeerTransactionTree t(PairKey::of(1, 2));
    auto p = propose(H, party(2, 2000), t, 1, 500, 5, true);
    expect_errc(Errc::WrongAddressee, [&] { accept(H, p, party(3, 0), t); });
    auto suspended = party(1, 1000);
    suspended.status = ClientStatus::Suspended;
    expect_errc(Errc::PeerSuspended, [&] { accept(H, p, suspended, t); });
}

TEST(LocalViewTest, BalancesFollowLeg) {
    PeerTransactionTree t(PairKey::of(1, 2));
    auto r = accept(H, propose(H, party(2, 2000), t, 1, 500, 5, true), party(1, 1000), t);
    auto payer = make_local_view(r, 2, 2000);
    auto payee = make_local_view(r, 1, 1000);
    EXPECT_EQ(payer.leg_id, "1.1");
    EXPECT_EQ(payee.leg_id, "1.2");
    EXPECT_EQ(payer.own_new_balance, 1500);
    EXPECT_EQ(payee.own_new_balance, 1500);
    EXPECT_EQ(H.commit_balance(2, r.pair_seq, payer.own_prior_balance), r.payer_prior_commit);
    EXPECT_EQ(H.commit_balance(1, r.pair_seq, payee.own_prior_balance), r.payee_prior_commit);
}

TEST(Commit, HonestPeersAgree) {
    Pair pair;
    transfer(pair, 2, 2000, 1, 1000, 500, 5);
    EXPECT_EQ(pair.payer_side.root(), pair.payee_side.root());
}

TEST(Commit, SequentialCommitsMatchBatchBuild) {
    Pair pair;
    std::vector<Bytes> encoded;
    encoded.push_back(transfer(pair, 2, 2000, 1, 1000, 500, 5).encode());
    EXPECT_EQ(pair.payer_side.root(), pair.payee_side.root());
    encoded.push_back(transfer(pair, 1, 1500, 2, 1500, 200, 6).encode());
    EXPECT_EQ(pair.payer_side.root(), pair.payee_side.root());
    encoded.push_back(transfer(pair, 2, 1700, 1, 1300, 700, 7).encode());
    EXPECT_EQ(pair.payer_side.root(), pair.payee_side.root());
    EXPECT_EQ(*pair.payer_side.root(), oracle::merkle_root(encoded));
}

TEST(Commit, TamperedPriorLeafCausesMismatchAndRollback) {
    Pair pair;
    std::vector<Bytes> honest;
    honest.push_back(transfer(pair, 2, 2000, 1, 1000, 500, 5).encode());
    pair.payee_side.corrupt_leaf(0, 40, 0x01);

    auto before_payer = pair.payer_side.leaves();
    auto before_payee = pair.payee_side.leaves();
    auto proposal = propose(H, party(2, 1500), pair.payer_side, 1, 100, 6, true);
    auto record = accept(H, proposal, party(1, 1500), pair.payee_side);
    auto outcome = commit(pair.payer_side, pair.payee_side, record);

    EXPECT_EQ(outcome.kind, CommitOutcome::Kind::RootMismatch);
    honest.push_back(record.encode());
    EXPECT_EQ(outcome.payer_root, oracle::merkle_root(honest));
    EXPECT_NE(outcome.payee_root, outcome.payer_root);
    EXPECT_EQ(pair.payer_side.leaves(), before_payer);
    EXPECT_EQ(pair.payee_side.leaves(), before_payee);
}

TEST(Commit, ReplayedSequenceRejectedBeforeCommit) {
    Pair pair;
    auto r = transfer(pair, 2, 2000, 1, 1000, 500, 5);
    auto before = pair.payer_side.leaves();
    expect_errc(Errc::DuplicateSequence, [&] { commit(pair.payer_side, pair.payee_side, r); });
    EXPECT_EQ(pair.payer_side.leaves(), before);
}

TEST(NetPosition, EmptySingleAndFold) {
    Pair pair;
    EXPECT_EQ(net_position(pair.payee_side, 1), 0);
    transfer(pair, 2, 2000, 1, 1000, 500, 5);
    EXPECT_EQ(net_position(pair.payee_side, 1), 500);
    EXPECT_EQ(net_position(pair.payer_side, 2), -500);

    std::mt19937_64 rng(9);
    Amount bal1 = 1500, bal2 = 1500;
    Amount oracle_net1 = 500;
    for (int i = 0; i < 40; ++i) {
        bool one_pays = rng() % 2;
        Amount from_bal = one_pays ? bal1 : bal2;
        if (from_bal == 0) continue;
        Amount amt = 1 + static_cast<Amount>(rng() % static_cast<std::uint64_t>(from_bal));
        if (one_pays) {
            transfer(pair, 1, bal1, 2, bal2, amt, 10 + i);
            bal1 -= amt, bal2 += amt, oracle_net1 -= amt;
        } else {
            transfer(pair, 2, bal2, 1, bal1, amt, 10 + i);
            bal2 -= amt, bal1 += amt, oracle_net1 += amt;
        }
        EXPECT_EQ(net_position(pair.payer_side, 1), oracle_net1);
        EXPECT_EQ(net_position(pair.payer_side, 2), -oracle_net1);
    }
}

TEST(ResetEpoch, ArchivesRootAndContinuesSequence) {
    Ed25519Scheme scheme;
    auto k1 = scheme.generate(1, testutil::str("k1"));
    auto k2 = scheme.generate(2, testutil::str("k2"));
    Pair pair;
    transfer(pair, 2, 2000, 1, 1000, 500, 5);
    transfer(pair, 2, 1500, 1, 1500, 100, 6);
    transfer(pair, 1, 1600, 2, 1400, 50, 7);
    Digest root = *pair.payer_side.root();

    std::vector<Signature> only_one{sign_root(scheme, root, k1)};
    expect_errc(Errc::MissingCounterSignature,
                [&] { reset_epoch(pair.payer_side, scheme, only_one, scheme.public_key(k1), scheme.public_key(k2)); });

    std::vector<Signature> both{sign_root(scheme, root, k1), sign_root(scheme, root, k2)};
    reset_epoch(pair.payer_side, scheme, both, scheme.public_key(k1), scheme.public_key(k2));
    reset_epoch(pair.payee_side, scheme, both, scheme.public_key(k1), scheme.public_key(k2));
    ASSERT_EQ(pair.payer_side.archived().size(), 1u);
    EXPECT_EQ(pair.payer_side.archived()[0].root, root);
    EXPECT_EQ(pair.payer_side.archived()[0].epoch, 0u);
    EXPECT_EQ(pair.payer_side.epoch(), 1u);
    EXPECT_TRUE(pair.payer_side.empty());

    auto r = transfer(pair, 2, 1450, 1, 1550, 10, 8);
    EXPECT_EQ(r.pair_seq, 4u);
    EXPECT_EQ(pair.payer_side.size(), 1u);
    EXPECT_EQ(pair.payer_side.archived()[0].root, root);
    EXPECT_EQ(pair.payer_side.root(), pair.payee_side.root());
    EXPECT_EQ(lifetime_net_position(pair.payer_side, 1), 500 + 100 - 50 + 10);
}

TEST(PeerTree, EncodeDecodeRestoresRoots) {
    Pair pair;
    transfer(pair, 2, 2000, 1, 1000, 500, 5);
    transfer(pair, 1, 1500, 2, 1500, 20, 6);
    auto copy = PeerTransactionTree::decode(pair.payer_side.encode());
    EXPECT_EQ(copy.root(), pair.payer_side.root());
    EXPECT_EQ(copy.next_seq(), pair.payer_side.next_seq());
}
