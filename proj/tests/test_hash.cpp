#include <gtest/gtest.h>

#include <set>
#include <tuple>

#include "dmoney/hash.hpp"
#include "dmoney/signature.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace dmoney;

using testutil::expect_errc;
using testutil::str;

TEST(HashLeaf, RejectsEmptyPayload) {
    expect_errc(Errc::EmptyPayload, [] { default_hasher().leaf({}); });
}

TEST(HashLeaf, Deterministic) {
    auto a = str("A");
    EXPECT_EQ(default_hasher().leaf(a), default_hasher().leaf(a));
}

TEST(HashLeaf, MatchesReferenceWithLeafTag) {
    EXPECT_EQ(default_hasher().leaf(str("A")), oracle::sha256(Bytes{0x00, 'A'}));
}

TEST(HashInternal, DiffersFromInput) {
    std::mt19937_64 rng(1);
    auto d = oracle::random_digest(rng);
    EXPECT_NE(default_hasher().internal(d, d), d);
}

TEST(HashInternal, OrderSensitive) {
    std::mt19937_64 rng(2);
    auto a = oracle::random_digest(rng);
    auto b = oracle::random_digest(rng);
    EXPECT_NE(default_hasher().internal(a, b), default_hasher().internal(b, a));
}

TEST(HashInternal, MatchesReferenceWithInternalTag) {
    std::mt19937_64 rng(3);
    auto a = oracle::random_digest(rng);
    auto b = oracle::random_digest(rng);
    EXPECT_EQ(default_hasher().internal(a, b), oracle::node(a, b));
}

TEST(HashInternal, DomainSeparatedFromLeaf) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 200; ++i) {
        Bytes p = oracle::random_bytes(rng, 64, 64);
        Digest l, r;
        std::copy(p.begin(), p.begin() + 32, l.bytes.begin());
        std::copy(p.begin() + 32, p.end(), r.bytes.begin());
        EXPECT_NE(default_hasher().leaf(p), default_hasher().internal(l, r));
    }
}

TEST(CommitBalance, DeterministicAndBindsClient) {
    const auto& h = default_hasher();
    EXPECT_EQ(h.commit_balance(1, 4, 1500), h.commit_balance(1, 4, 1500));
    EXPECT_NE(h.commit_balance(1, 4, 1500), h.commit_balance(2, 4, 1500));
}

TEST(CommitBalance, MatchesCanonicalLayout) {
    EXPECT_EQ(default_hasher().commit_balance(1, 1, 1000), oracle::commit_balance(1, 1, 1000));
}

TEST(CommitBalance, RejectsNegative) {
    expect_errc(Errc::NegativeBalance, [] { default_hasher().commit_balance(1, 1, -1); });
}

TEST(CommitBalance, NoCollisionsOverRandomTriples) {
    std::mt19937_64 rng(5);
    std::set<std::tuple<ClientId, std::uint64_t, Amount>> triples;
    std::set<Digest> digests;
    while (triples.size() < 10000) {
        auto t = std::make_tuple(rng() % 64, rng() % 64, static_cast<Amount>(rng() % 5000));
        if (!triples.insert(t).second) continue;
        digests.insert(default_hasher().commit_balance(std::get<0>(t), std::get<1>(t), std::get<2>(t)));
    }
    EXPECT_EQ(digests.size(), triples.size());
}

TEST(HashScheme, PluggableDouble) {
    int calls = 0;
    Hasher counting(HashScheme("counting", [&](ByteView in) {
        ++calls;
        return HashScheme::sha256()(in);
    }));
    auto d = counting.leaf(str("x"));
    EXPECT_EQ(calls, 1);
    EXPECT_EQ(d, default_hasher().leaf(str("x")));
    EXPECT_EQ(counting.scheme().name(), "counting");
}

TEST(Codec, BigEndianFixedWidth) {
    Encoder e;
    e.u64(0x0102030405060708ull).u32(0x0a0b0c0d).u8(0xff);
    EXPECT_EQ(to_hex(e.bytes()), "01020304050607080a0b0c0dff");
    Decoder d(e.bytes());
    EXPECT_EQ(d.u64(), 0x0102030405060708ull);
    EXPECT_EQ(d.u32(), 0x0a0b0c0du);
    EXPECT_EQ(d.u8(), 0xff);
    EXPECT_TRUE(d.done());
    expect_errc(Errc::Malformed, [&] { d.u8(); });
}

TEST(Digest, HexRoundTrip) {
    std::mt19937_64 rng(6);
    auto d = oracle::random_digest(rng);
    EXPECT_EQ(Digest::from_hex(d.hex()), d);
    expect_errc(Errc::Malformed, [] { Digest::from_hex("abcd"); });
}

class SignatureSchemes : public ::testing::TestWithParam<int> {
protected:
    std::unique_ptr<SignatureScheme> make() {
        if (GetParam() == 0) return std::make_unique<Ed25519Scheme>();
        return std::make_unique<KeyedHashScheme>();
    }
};

TEST_P(SignatureSchemes, RoundTripAndForgeryRejection) {
    auto scheme = make();
    auto k1 = scheme->generate(1, str("seed-1"));
    auto k2 = scheme->generate(2, str("seed-2"));
    std::mt19937_64 rng(7);
    auto root = oracle::random_digest(rng);

    auto sig = sign_root(*scheme, root, k1);
    EXPECT_EQ(sig.signer, 1u);
    EXPECT_TRUE(verify_root(*scheme, root, sig, scheme->public_key(k1)));

    auto flipped = root;
    flipped.bytes[5] ^= 0x10;
    EXPECT_FALSE(verify_root(*scheme, flipped, sig, scheme->public_key(k1)));

    auto bad = sig;
    bad.bytes[0] ^= 0x01;
    EXPECT_FALSE(verify_root(*scheme, root, bad, scheme->public_key(k1)));

    EXPECT_FALSE(verify_root(*scheme, root, sig, scheme->public_key(k2)));
}

TEST_P(SignatureSchemes, UnknownKey) {
    auto scheme = make();
    expect_errc(Errc::UnknownKey, [&] { sign_root(*scheme, Digest{}, KeyHandle{42}); });
}

TEST_P(SignatureSchemes, SameSeedSameKey) {
    auto a = make();
    auto b = make();
    EXPECT_EQ(a->public_key(a->generate(1, str("s"))), b->public_key(b->generate(1, str("s"))));
}

INSTANTIATE_TEST_SUITE_P(All, SignatureSchemes, ::testing::Values(0, 1));
