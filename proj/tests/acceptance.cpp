// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "dmoney/simulator.hpp"
#include "mht_oracle.hpp"
#include "oracle.hpp"

using namespace dmoney;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
};

struct Fail {
    std::ostringstream os;
    bool any = false;
    template <typename T>
    Fail& operator<<(const T& v) {
        if (!any) os << v;
        return *this;
    }
};

#define REQUIRE(cond, fail, msg)       \
    do {                               \
        if (!(cond)) {                 \
            if (!(fail).any) {         \
                (fail) << msg;         \
                (fail).any = true;     \
            }                          \
        }                              \
    } while (0)

Outcome done(Fail& f, std::string ok_detail) {
    if (f.any) return {false, f.os.str()};
    return {true, std::move(ok_detail)};
}

Bytes encode_pair_record(const TransactionPairRecord& r) {
    Bytes b;
    oracle::put_be(b, r.pair_seq);
    oracle::put_be(b, r.timestamp);
    oracle::put_be(b, r.payer);
    oracle::put_be(b, r.payee);
    oracle::put_be(b, static_cast<std::uint64_t>(r.amount));
    for (const auto* d : {&r.payer_prior_commit, &r.payer_new_commit, &r.payee_prior_commit, &r.payee_new_commit,
                          &r.payer_provenance, &r.payee_provenance})
        oracle::put(b, *d);
    return b;
}

Digest oracle_pttr(const PeerTransactionTree& t) {
    std::vector<Bytes> payloads;
    for (const auto& r : t.records()) payloads.push_back(encode_pair_record(r));
    return oracle::merkle_root(payloads);
}

Digest oracle_mhtr(const BalanceMHT& t) {
    if (t.empty()) return oracle::sha256(Bytes{0x03});
    return oracle::mht_node_hash(t, t.root_index());
}

// Random honest workload: payer always has funds.
void workload(Simulator& sim, std::mt19937_64& rng, std::size_t n, Amount max_amount = 60) {
    auto ids = sim.clients();
    std::size_t done = 0;
    while (done < n) {
        auto p = ids[rng() % ids.size()];
        auto q = ids[rng() % ids.size()];
        auto bal = sim.node(p).balance();
        if (p == q || bal <= 0) continue;
        auto amount = 1 + static_cast<Amount>(rng() % static_cast<std::uint64_t>(std::min(bal, max_amount)));
        sim.transact(p, q, amount);
        ++done;
    }
}

std::unique_ptr<Simulator> funded(std::uint64_t seed, std::size_t clients, Amount each = 1000) {
    SimConfig cfg;
    cfg.seed = seed;
    auto sim = std::make_unique<Simulator>(cfg);
    for (std::size_t i = 0; i < clients; ++i) sim->enroll();
    sim->register_all();
    for (auto c : sim->clients()) sim->issue(c, each);
    return sim;
}

// 1 -------------------------------------------------------------------------

Outcome temporal_history() {
    Fail f;
    auto r = run(parse_scenario(R"(
seed 4
enroll 2
register 1 2
issue 1 1000
issue 2 2000
transact 2 1 500
)"));
    REQUIRE(r.passed(), f, "scenario failed");
    const auto& cm = r.sim->cm();
    std::map<Tick, std::string> names;
    const auto& v = cm.table().versions();
    if (v.size() != 6) return {false, "expected 6 rows, got " + std::to_string(v.size())};
    names = {{v[0].valid_from, "May 17 2PM"}, {v[1].valid_from, "May 17 2 PM"}, {v[4].valid_from, "May 18 3 PM"}};
    auto label = [&](Tick t) { return names.count(t) ? names[t] : std::to_string(t); };
    const std::string expected =
        "Transaction Time-stamp\tClient ID\tValid Balance\tValid From\tValid To\tRemarks\n"
        "T1\t1\t1000\tMay 17 2PM\tinf\tInitial Balance\n"
        "T2\t2\t2000\tMay 17 2 PM\tinf\tInitial Balance\n"
        "T3\t1\t1000\tMay 17 2PM\tMay 18 3 PM\tUpdated Record\n"
        "T3\t2\t2000\tMay 17 2 PM\tMay 18 3 PM\tUpdated Record\n"
        "T4\t1\t1500\tMay 18 3 PM\tinf\tUpdated Balance\n"
        "T4\t2\t1500\tMay 18 3 PM\tinf\tUpdated Balance\n";
    // Drop the provenance column for the comparison.
    std::istringstream in(cm.table().export_delimited('\t', label));
    std::string line, got;
    while (std::getline(in, line)) got += line.substr(0, line.rfind('\t')) + "\n";
    REQUIRE(got == expected, f, "export differs:\n" << got);
    for (Tick t = 0; t <= r.sim->now(); ++t) {
        auto c = cm.check_conservation(t);
        auto want = t < v[0].valid_from ? 0 : (t < v[1].valid_from ? 1000 : 3000);
        REQUIRE(c.holds && c.sum == want, f, "conservation at tick " << t << ": sum " << c.sum);
    }
    REQUIRE(cm.check_conservation_now().sum == 3000, f, "final sum " << cm.check_conservation_now().sum);
    return done(f, "6 rows match, conservation holds at every tick, sum 3000");
}

// 2 -------------------------------------------------------------------------

Outcome grid_snapshot() {
    Fail f;
    auto sim = funded(5, 3, 500);
    sim->transact(1, 2, 40);
    sim->transact(3, 1, 25);
    sim->transact(2, 3, 10);
    sim->transact(2, 1, 5);
    sim->quiesce();
    auto g = sim->capture(1);
    REQUIRE(g.clients == (std::vector<ClientId>{1, 2, 3}), f, "grid clients");
    const auto empty = oracle::sha256(Bytes{0x06});
    std::size_t pttr_cells = 0;
    for (std::size_t i = 0; i < 3 && !f.any; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            ClientId a = g.clients[i], b = g.clients[j];
            if (i == j) {
                REQUIRE(g.cells[i][i] == oracle_mhtr(sim->node(a).balance_tree()), f, "diagonal " << i);
            } else if (i < j) {
                const auto* t = sim->node(a).find_ptt(PairKey::of(a, b));
                REQUIRE(t && g.cells[i][j] == oracle_pttr(*t), f, "PTTR cell (" << a << "," << b << ")");
                ++pttr_cells;
            } else {
                REQUIRE(g.cells[i][j] == empty, f, "lower cell (" << a << "," << b << ") not empty");
            }
        }
    }
    auto o = oracle::grid(g.cells);
    REQUIRE(o.rows == g.row_hashes, f, "row hashes differ from oracle");
    REQUIRE(o.cols == g.column_hashes, f, "column hashes differ from oracle");
    REQUIRE(o.grid == g.grid_hash, f, "grid hash differs from oracle");
    std::map<ClientId, Digest> mhtrs;
    std::map<PairKey, Digest> pttrs;
    for (auto c : g.clients) {
        mhtrs[c] = sim->node(c).mhtr();
        for (const auto& [p, root] : sim->node(c).pttrs()) pttrs[p] = root;
    }
    auto verdict = IntegrityManager::verify_grid(sim->scheme(), sim->attesting_keys().integrity_manager, g, mhtrs,
                                                 pttrs);
    REQUIRE(verdict.matches, f, "signed grid does not verify");
    REQUIRE(pttr_cells == 3, f, "pttr cells " << pttr_cells);
    return done(f, "3x3 grid, PTTRs at (1,2) (1,3) (2,3), hashes equal oracle, signature verifies");
}

// 3 -------------------------------------------------------------------------

Outcome symmetry() {
    Fail f;
    auto sim = funded(33, 6);
    std::mt19937_64 rng(33);
    auto ids = sim->clients();
    std::size_t committed = 0;
    while (committed < 500 && !f.any) {
        auto p = ids[rng() % ids.size()], q = ids[rng() % ids.size()];
        auto bal = sim->node(p).balance();
        if (p == q || bal <= 0) continue;
        auto amount = 1 + static_cast<Amount>(rng() % static_cast<std::uint64_t>(std::min<Amount>(bal, 80)));
        bool ok = sim->transact(p, q, amount);
        REQUIRE(ok, f, "transaction " << committed << " did not commit");
        auto pair = PairKey::of(p, q);
        const auto* a = sim->node(p).find_ptt(pair);
        const auto* b = sim->node(q).find_ptt(pair);
        REQUIRE(a && b && a->root() == b->root(), f, "PTTRs differ on " << pair.str() << " after commit");
        REQUIRE(a && *a->root() == oracle_pttr(*a), f, "PTTR differs from oracle on " << pair.str());
        ++committed;
    }
    sim->quiesce();
    REQUIRE(sim->alert_count("any") == 0, f, sim->alert_count("any") << " alerts");
    REQUIRE(sim->cm().check_conservation_now().holds, f, "conservation violated");
    return done(f, std::to_string(committed) + " commits across 6 clients, equal PTTRs, 0 alerts");
}

// 4 -------------------------------------------------------------------------

std::unique_ptr<Simulator> tamper_base() {
    auto sim = funded(44, 5, 400);
    std::mt19937_64 rng(44);
    workload(*sim, rng, 50, 40);
    sim->quiesce();
    return sim;
}

// One transaction on `pair`; both peers report it.
void trigger(Simulator& sim, PairKey pair) {
    if (pair.lo == kCurrencyManagerId) {
        sim.issue(pair.hi, 1);
    } else if (sim.node(pair.lo).balance() > 0) {
        sim.transact(pair.lo, pair.hi, 1);
    } else {
        sim.transact(pair.hi, pair.lo, 1);
    }
    sim.quiesce();
}

Outcome tamper() {
    Fail f;
    std::vector<PairKey> pairs;
    {
        auto sim = tamper_base();
        for (auto c : sim->clients())
            for (const auto& [p, root] : sim->node(c).pttrs())
                if (std::find(pairs.begin(), pairs.end(), p) == pairs.end()) pairs.push_back(p);
        for (auto p : pairs) trigger(*sim, p);
        REQUIRE(sim->alert_count("any") == 0, f, "control run raised " << sim->alert_count("any") << " alerts");
    }
    std::mt19937_64 rng(4);
    std::size_t trials = 0, detected = 0;
    for (auto pair : pairs) {
        for (ClientId holder : {pair.lo, pair.hi}) {
            for (std::size_t leaf = 0;; ++leaf) {
                auto sim = tamper_base();
                auto size = sim->node(holder).find_ptt(pair)->size();
                if (leaf > size) break;  // `size` is the leaf the trigger appends
                auto byte = rng() % TransactionPairRecord::kEncodedSize;
                bool applied = false;
                sim->set_before_report([&](ClientNode& p, ClientNode& q) {
                    if (applied || PairKey::of(p.id(), q.id()) != pair) return;
                    auto& n = p.id() == holder ? p : q;
                    n.ptt(pair.other(holder)).corrupt_leaf(leaf, byte, 0xff);
                    applied = true;
                });
                trigger(*sim, pair);
                ++trials;
                bool one = sim->alert_count("RootMismatch") == 1 && sim->alert_count("any") == 1 &&
                           sim->log().count("alert", pair.str()) == 1;
                if (applied && one) ++detected;
                REQUIRE(applied && one, f,
                        "pair " << pair.str() << " holder " << holder << " leaf " << leaf << ": RootMismatch="
                                << sim->alert_count("RootMismatch") << " any=" << sim->alert_count("any"));
            }
        }
    }
    return done(f, std::to_string(detected) + "/" + std::to_string(trials) + " leaf tampers over " +
                       std::to_string(pairs.size()) + " trees detected once each, control run 0 alerts");
}

// 5 -------------------------------------------------------------------------

Outcome double_spend_and_replay() {
    Fail f;
    std::size_t stale = 0, replays = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        auto sim = funded(500 + seed, 4, 300);
        std::mt19937_64 rng(seed);
        workload(*sim, rng, 10, 30);
        sim->quiesce();
        ClientId a = 1 + rng() % 4, b = a % 4 + 1, c = b % 4 + 1;
        auto amount = 1 + static_cast<Amount>(rng() % static_cast<std::uint64_t>(sim->node(a).balance()));
        sim->inject({FaultSpec::Kind::DoubleSpend, {a, b, c}, amount, {}, {}, 0});
        sim->quiesce();
        bool hit = sim->event_count("StaleProvenance") == 1 && sim->unmet_detections().empty();
        stale += hit;
        REQUIRE(hit, f, "double-spend seed " << seed << ": StaleProvenance=" << sim->event_count("StaleProvenance"));
    }
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        auto sim = funded(700 + seed, 4, 300);
        std::mt19937_64 rng(seed);
        workload(*sim, rng, 12, 30);
        sim->quiesce();
        // Any client pair that has transacted; replay a random sequence.
        std::vector<std::pair<ClientId, PairKey>> candidates;
        for (auto c : sim->clients())
            for (const auto& [p, root] : sim->node(c).pttrs())
                if (p.lo != kCurrencyManagerId) candidates.push_back({c, p});
        auto [who, pair] = candidates[rng() % candidates.size()];
        const auto* t = sim->node(who).find_ptt(pair);
        std::uint64_t seq = t->first_seq() + rng() % t->size();
        sim->inject({FaultSpec::Kind::ReplayReport, {who, pair.other(who)}, 0, seq, {}, 0});
        sim->quiesce();
        bool hit = sim->alert_count("replay") == 1 && sim->alert_count("any") == 1 &&
                   sim->unmet_detections().empty();
        replays += hit;
        REQUIRE(hit, f, "replay seed " << seed << ": replay alerts=" << sim->alert_count("replay"));
    }
    return done(f, "StaleProvenance " + std::to_string(stale) + "/100, replay alert " + std::to_string(replays) +
                       "/100");
}

// 6 -------------------------------------------------------------------------

Outcome recovery() {
    Fail f;
    std::size_t ok = 0;
    for (ClientId victim = 1; victim <= 5; ++victim) {
        for (bool snapshot : {false, true}) {
            auto sim = funded(60 + victim, 5, 500);
            std::mt19937_64 rng(victim);
            workload(*sim, rng, 40, 50);
            if (snapshot) sim->persist(victim);
            workload(*sim, rng, 20, 50);
            sim->quiesce();
            auto pttrs = sim->node(victim).pttrs();
            auto mhtr = sim->node(victim).mhtr();
            auto balance = sim->node(victim).balance();
            sim->inject({FaultSpec::Kind::CrashClient, {victim}, 0, {}, {}, 0});
            bool recovered = sim->recover(victim);
            auto rb = sim->recover_balance(victim);
            bool same = recovered && sim->node(victim).pttrs() == pttrs && sim->node(victim).mhtr() == mhtr &&
                        sim->recovered_identical(victim) == true;
            bool bal = rb && *rb == sim->cm().open_balance(victim) && *rb == balance;
            ok += same && bal;
            REQUIRE(same, f, "client " << victim << (snapshot ? " (snapshot)" : "") << ": roots differ");
            REQUIRE(bal, f, "client " << victim << ": recovered balance " << rb.value_or(-1) << " vs open "
                                      << sim->cm().open_balance(victim));
        }
    }
    return done(f, std::to_string(ok) + "/10 wipes (5 clients, with and without snapshot) restored exactly");
}

// 7 -------------------------------------------------------------------------

Outcome proof_bounds() {
    Fail f;
    const auto& h = default_hasher();
    std::mt19937_64 rng(7);
    std::vector<std::vector<Bytes>> payloads(65);
    std::vector<MerkleTree> trees;
    trees.emplace_back();
    std::size_t proofs = 0;
    for (std::size_t n = 1; n <= 64; ++n) {
        for (std::size_t i = 0; i < n; ++i) payloads[n].push_back(oracle::random_bytes(rng, 1, 48));
        auto t = MerkleTree::build(payloads[n]);
        REQUIRE(t.root() == oracle::merkle_root(payloads[n]), f, "root differs from oracle at n=" << n);
        for (std::size_t i = 0; i < n; ++i) {
            auto p = t.prove(i);
            ++proofs;
            REQUIRE(verify(h, payloads[n][i], p, t.root()), f, "proof n=" << n << " i=" << i << " fails");
            REQUIRE(p.path.size() <= oracle::ceil_log2(n), f,
                    "path length " << p.path.size() << " > ceil(log2 " << n << ")");
        }
        trees.push_back(std::move(t));
    }
    std::size_t rejected = 0;
    for (int k = 0; k < 10'000; ++k) {
        std::size_t n = 1 + rng() % 64, i = rng() % n;
        const auto& t = trees[n];
        auto p = t.prove(i);
        Bytes payload = payloads[n][i];
        Digest root = t.root();
        switch (k % 7) {
            case 0:
                if (p.path.empty()) {
                    payload.back() ^= 0x01;
                } else {
                    p.path[rng() % p.path.size()].sibling.bytes[rng() % 32] ^= static_cast<std::uint8_t>(1 + rng() % 255);
                }
                break;
            case 1:
                if (p.path.empty()) {
                    p.path.push_back({Side::Left, oracle::random_digest(rng)});
                } else {
                    auto& s = p.path[rng() % p.path.size()];
                    s.side = s.side == Side::Left ? Side::Right : Side::Left;
                }
                break;
            case 2: payload = oracle::random_bytes(rng, 1, 48); break;
            case 3: root = oracle::random_digest(rng); break;
            case 4:
                if (p.path.empty())
                    p.path.push_back({Side::Right, oracle::random_digest(rng)});
                else
                    p.path.pop_back();
                break;
            case 5: p.path.push_back({rng() % 2 ? Side::Left : Side::Right, oracle::random_digest(rng)}); break;
            case 6:
                if (n > 1) {
                    p = t.prove((i + 1 + rng() % (n - 1)) % n);
                } else {
                    payload.push_back(0);
                }
                break;
        }
        bool accepted = verify(h, payload, p, root);
        rejected += !accepted;
        REQUIRE(!accepted, f, "forged proof " << k << " (kind " << k % 7 << ") accepted");
    }
    return done(f, std::to_string(proofs) + " proofs for n=1..64 within ceil(log2 n), " + std::to_string(rejected) +
                       "/10000 forgeries rejected");
}

// 8 -------------------------------------------------------------------------

BalanceChangeRecord mutate(BalanceChangeRecord r, std::size_t how) {
    switch (how % 6) {
        case 0: r.new_balance += 1; break;
        case 1: r.delta -= 1; break;
        case 2: r.peer_id += 1; break;
        case 3: r.causing_pttr.bytes[5] ^= 0x10; break;
        case 4: r.timestamp += 1; break;
        case 5: r.pair_seq += 1; break;
    }
    return r;
}

Outcome balance_tree() {
    Fail f;
    std::size_t rebuilt = 0, attacks = 0, caught = 0;
    for (std::size_t order = 3; order <= 8 && !f.any; ++order) {
        std::mt19937_64 rng(80 + order);
        auto history = oracle::random_history(rng, 200);
        BalanceMHT t(order);
        for (const auto& r : history) {
            t.insert(r);
            bool same = oracle::mht_hashes_consistent(t, t.root_index()) && t.root() == oracle_mhtr(t);
            ++rebuilt;
            REQUIRE(same, f, "fanout " << order << ": cached hashes differ at " << t.size() << " records");
        }

        BalanceMHT small(order);
        auto h30 = oracle::random_history(rng, 30);
        for (const auto& r : h30) small.insert(r);
        const auto root = small.root();
        for (std::size_t a = 0; a < h30.size() && !f.any; ++a) {
            for (std::size_t b = a; b < h30.size(); ++b) {
                auto [records, vo] = small.range_query(h30[a].key(), h30[b].key());
                auto honest = check_range(small.hasher(), records, vo, root);
                REQUIRE(honest.correct && honest.complete && records.size() == b - a + 1, f,
                        "honest range " << a << ".." << b << " rejected");
                for (std::size_t k = 0; k < records.size(); ++k) {
                    auto dropped = records;
                    dropped.erase(dropped.begin() + static_cast<long>(k));
                    auto concealed = vo;
                    concealed.conceal_returned(k, small.record_digest(records[k]));
                    auto mutated = records;
                    mutated[k] = mutate(mutated[k], k + a);
                    for (const auto& [recs, v] : {std::pair{dropped, vo}, std::pair{dropped, concealed},
                                                   std::pair{mutated, vo}}) {
                        auto c = check_range(small.hasher(), recs, v, root);
                        ++attacks;
                        caught += !(c.correct && c.complete);
                        REQUIRE(!(c.correct && c.complete), f,
                                "fanout " << order << " range " << a << ".." << b << " record " << k
                                          << " attack undetected");
                    }
                }
            }
        }
    }
    return done(f, std::to_string(rebuilt) + " rebuild comparisons for fanouts 3-8, " + std::to_string(caught) + "/" +
                       std::to_string(attacks) + " omissions/mutations detected");
}

// 9 -------------------------------------------------------------------------

std::unique_ptr<Simulator> converging_run(std::uint64_t seed, const DeliveryPolicy& policy) {
    SimConfig cfg;
    cfg.seed = seed;
    cfg.reporting_deadline = 1000;
    cfg.policy = policy;
    auto sim = std::make_unique<Simulator>(cfg);
    for (int i = 0; i < 5; ++i) sim->enroll();
    sim->register_all();
    for (auto c : sim->clients()) sim->issue(c, 500);
    std::mt19937_64 rng(seed);
    workload(*sim, rng, 60, 40);
    sim->quiesce();
    return sim;
}

std::string roots_of(const Simulator& sim) {
    std::ostringstream os;
    for (auto c : sim.clients())
        for (const auto& [p, root] : sim.node(c).pttrs()) os << c << " " << p.str() << " " << root.hex() << "\n";
    return os.str();
}

Outcome eventual_consistency() {
    Fail f;
    auto base = converging_run(90, DeliveryPolicy::instant());
    auto want = base->state_digest();
    auto want_roots = roots_of(*base);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t same = 0, duplicates = 0, retries = 0;
    for (int i = 0; i < 50; ++i) {
        DeliveryPolicy p;
        p.delay = 0.1 + 0.8 * u(rng);
        p.max_delay = 1 + rng() % 8;
        p.duplicate = 0.5 * u(rng);
        p.drop = i % 2 ? 0.3 * u(rng) : 0.0;
        auto sim = converging_run(90, p);
        bool ok = sim->state_digest() == want && roots_of(*sim) == want_roots && sim->alert_count("any") == 0 &&
                  sim->in_flight() == 0;
        same += ok;
        duplicates += sim->log().count("duplicate");
        retries += sim->log().count("retry");
        REQUIRE(ok, f, "policy " << i << " (delay " << p.delay << " dup " << p.duplicate << " drop " << p.drop
                                 << ") diverged; alerts=" << sim->alert_count("any"));
    }
    REQUIRE(duplicates > 0 && retries > 0, f, "policies never duplicated or retransmitted");
    return done(f, std::to_string(same) + "/50 delivery policies reach the instant-delivery state (" +
                       std::to_string(duplicates) + " duplicates, " + std::to_string(retries) + " retransmissions)");
}

// 10 ------------------------------------------------------------------------

Outcome reparation() {
    Fail f;
    auto sim = funded(10, 5, 600);
    std::mt19937_64 rng(10);
    auto ids = sim->clients();
    auto balances = [&] {
        std::vector<std::pair<Amount, Amount>> out;
        for (auto c : ids) out.push_back({sim->node(c).balance(), sim->cm().open_balance(c)});
        return out;
    };
    std::size_t restored = 0;
    for (int i = 0; i < 100 && !f.any; ++i) {
        workload(*sim, rng, 1 + rng() % 3, 40);
        sim->quiesce();
        auto before = balances();
        ClientId p = 0, q = 0;
        while (p == q || sim->node(p).balance() <= 0) {
            p = ids[rng() % ids.size()];
            q = ids[rng() % ids.size()];
        }
        auto amount = 1 + static_cast<Amount>(rng() % static_cast<std::uint64_t>(sim->node(p).balance()));
        sim->transact(p, q, amount);
        sim->quiesce();
        REQUIRE(sim->cm().check_conservation_now().holds, f, "conservation after transaction " << i);
        auto pair = PairKey::of(p, q);
        auto seq = sim->node(p).find_ptt(pair)->next_seq() - 1;
        bool repaired = sim->repair(p, q, seq);
        sim->quiesce();
        bool ok = repaired && balances() == before;
        restored += ok;
        REQUIRE(ok, f, "repair " << i << " of " << pair.str() << " seq " << seq << " did not restore balances");
    }
    for (Tick t = 0; t <= sim->now(); ++t)
        REQUIRE(sim->cm().check_conservation(t).holds, f, "conservation broken at tick " << t);
    REQUIRE(sim->alert_count("any") == 0, f, sim->alert_count("any") << " alerts");
    return done(f, std::to_string(restored) + "/100 repairs restore every balance, conservation holds at all " +
                       std::to_string(sim->now() + 1) + " ticks");
}

struct Criterion {
    int number;
    const char* name;
    double limit_seconds;  // 0: none
    std::function<Outcome()> fn;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "temporal balance history", 1.0, temporal_history},
        {2, "three-peer Merkle hash grid", 1.0, grid_snapshot},
        {3, "commit symmetry", 10.0, symmetry},
        {4, "tamper detection", 60.0, tamper},
        {5, "double-spend and replay", 0, double_spend_and_replay},
        {6, "recovery fidelity", 0, recovery},
        {7, "Merkle proof bounds", 0, proof_bounds},
        {8, "balance tree oracle", 0, balance_tree},
        {9, "eventual consistency", 0, eventual_consistency},
        {10, "reparation round trip", 0, reparation},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (o.ok && c.limit_seconds > 0 && secs >= c.limit_seconds) {
            o.ok = false;
            o.detail += "; took longer than the " + std::to_string(c.limit_seconds) + " s limit";
        }
        failed += !o.ok;
        std::cout << (o.ok ? "PASS" : "FAIL") << "  " << c.number << ". " << c.name << ": " << o.detail << " ["
                  << static_cast<long>(std::lround(secs * 1000)) << " ms]\n";
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
              << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
