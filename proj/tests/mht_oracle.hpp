#pragma once

// Independent recomputation of balance tree hashes and a random history
// generator, shared by the unit and acceptance suites.

#include <random>
#include <vector>

#include "dmoney/balance_mht.hpp"
#include "oracle.hpp"

namespace oracle {

inline Bytes encode_record(const dmoney::BalanceChangeRecord& r) {
    Bytes b;
    put_be(b, r.pair_seq);
    put_be(b, r.timestamp);
    put_be(b, r.peer_id);
    put_be(b, static_cast<std::uint64_t>(r.delta));
    put_be(b, static_cast<std::uint64_t>(r.new_balance));
    put(b, r.causing_pttr);
    return b;
}

inline Digest mht_node_hash(const dmoney::BalanceMHT& t, std::size_t i) {
    const auto& n = t.node(i);
    Bytes b;
    if (n.leaf) {
        b.push_back(0x04);
        for (const auto& r : n.records) put(b, leaf(encode_record(r)));
    } else {
        b.push_back(0x05);
        put_be(b, n.keys.size(), 4);
        for (const auto& k : n.keys) {
            put_be(b, k.timestamp);
            put_be(b, k.pair_seq);
        }
        for (auto c : n.children) put(b, mht_node_hash(t, c));
    }
    return sha256(b);
}

/// Every cached node hash equals a from-scratch recomputation.
inline bool mht_hashes_consistent(const dmoney::BalanceMHT& t, std::size_t i) {
    const auto& n = t.node(i);
    if (!n.leaf)
        for (auto c : n.children)
            if (!mht_hashes_consistent(t, c)) return false;
    return n.hash == mht_node_hash(t, i);
}

inline std::vector<dmoney::BalanceChangeRecord> random_history(std::mt19937_64& rng, std::size_t n) {
    std::vector<dmoney::BalanceChangeRecord> out;
    dmoney::Amount bal = 0;
    dmoney::Tick ts = 1;
    for (std::size_t i = 0; i < n; ++i) {
        dmoney::BalanceChangeRecord r;
        ts += rng() % 3;  // repeated ticks exercise the pair_seq tiebreak
        r.timestamp = ts;
        r.pair_seq = i + 1;
        r.peer_id = 1 + rng() % 5;
        bool debit = bal > 0 && rng() % 2;
        r.delta = debit ? -static_cast<dmoney::Amount>(1 + rng() % static_cast<std::uint64_t>(bal))
                        : static_cast<dmoney::Amount>(1 + rng() % 1000);
        bal += r.delta;
        r.new_balance = bal;
        r.causing_pttr = random_digest(rng);
        out.push_back(r);
    }
    return out;
}

}  // namespace oracle
