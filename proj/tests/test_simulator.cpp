#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dmoney/simulator.hpp"
#include "test_util.hpp"

using namespace dmoney;
using testutil::expect_errc;

namespace {

RunResult run_text(std::string_view text, std::optional<std::uint64_t> seed = std::nullopt) {
    return run(parse_scenario(text), seed);
}

std::string failures_of(const RunResult& r) {
    std::string out;
    for (const auto& f : r.failures) out += f + "\n";
    return out;
}

constexpr std::string_view kTwoClientTransfer = R"(
seed 4
enroll 2
register 1 2
issue 1 1000
issue 2 2000
transact 2 1 500
expect balance 1 1500
expect balance 2 1500
expect conservation holds
)";

constexpr std::string_view kBusy = R"(
seed 21
enroll 5
register all
issue 1 800
issue 2 800
issue 3 800
random 80 min=1 max=60
)";

}  // namespace

TEST(Simulator, TwoClientTransferBalanceHistory) {
    auto r = run_text(kTwoClientTransfer);
    ASSERT_TRUE(r.passed()) << failures_of(r);
    const auto& cm = r.sim->cm();
    struct Want {
        std::uint64_t stamp;
        ClientId client;
        Amount balance;
        bool open;
        std::string remarks;
    };
    const std::vector<Want> want{{1, 1, 1000, true, "Initial Balance"},  {2, 2, 2000, true, "Initial Balance"},
                                 {3, 1, 1000, false, "Updated Record"},  {3, 2, 2000, false, "Updated Record"},
                                 {4, 1, 1500, true, "Updated Balance"}, {4, 2, 1500, true, "Updated Balance"}};
    const auto& rows = cm.table().versions();
    ASSERT_EQ(rows.size(), want.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].txn_stamp, want[i].stamp) << i;
        EXPECT_EQ(rows[i].client, want[i].client) << i;
        EXPECT_EQ(rows[i].balance, want[i].balance) << i;
        EXPECT_EQ(rows[i].valid_to == kForever, want[i].open) << i;
        EXPECT_EQ(rows[i].remarks, want[i].remarks) << i;
    }
    EXPECT_EQ(rows[2].valid_to, rows[4].valid_from);
    for (Tick t = 0; t <= r.sim->now(); ++t) {
        auto v = cm.check_conservation(t);
        EXPECT_TRUE(v.holds) << "tick " << t;
    }
    EXPECT_EQ(cm.check_conservation_now().sum, 3000);
}

TEST(Simulator, SameSeedSameLog) {
    auto a = run_text(kBusy);
    auto b = run_text(kBusy);
    EXPECT_EQ(a.log.text(), b.log.text());
    EXPECT_EQ(a.sim->state_digest(), b.sim->state_digest());
    auto c = run_text(kBusy, 22);
    EXPECT_NE(a.log.text(), c.log.text());
}

TEST(Simulator, LogLineFormat) {
    auto r = run_text(kTwoClientTransfer);
    for (const auto& line : r.log.lines()) {
        auto text = line.str();
        EXPECT_EQ(text.rfind(std::to_string(line.tick) + "|" + line.actor + "|" + line.event + "|", 0), 0u) << text;
        EXPECT_EQ(line.actor.find('|'), std::string::npos);
    }
    EXPECT_GT(r.log.count("validated"), 0u);
    EXPECT_EQ(r.log.count("alert"), 0u);
}

TEST(Simulator, HonestRunHasNoAlerts) {
    auto r = run_text(kBusy);
    ASSERT_TRUE(r.passed()) << failures_of(r);
    EXPECT_EQ(r.sim->alert_count("any"), 0u);
    EXPECT_TRUE(r.sim->cm().check_conservation_now().holds);
    for (auto c : r.sim->clients()) EXPECT_TRUE(r.sim->node(c).consistent());
}

TEST(Simulator, TamperYieldsExactlyOneRootMismatch) {
    auto r = run_text(R"(
seed 3
enroll 3
register all
issue 1 500
transact 1 2 40
transact 2 1 15
fault tamper 1 2 leaf=1 byte=2
transact 1 2 5
)");
    ASSERT_TRUE(r.passed()) << failures_of(r);
    EXPECT_EQ(r.sim->alert_count("RootMismatch"), 1u);
    EXPECT_EQ(r.sim->alert_count("any"), 1u);
    EXPECT_EQ(r.log.count("alert", "1:2"), 1u);
}

TEST(Simulator, DoubleSpendIsStale) {
    auto r = run_text(R"(
seed 5
enroll 3
register all
issue 1 300
fault double-spend 1 2 3 200
)");
    ASSERT_TRUE(r.passed()) << failures_of(r);
    EXPECT_GE(r.sim->event_count("StaleProvenance"), 1u);
}

TEST(Simulator, ReplayIsFlagged) {
    auto r = run_text(R"(
seed 6
enroll 2
register 1 2
issue 1 100
transact 1 2 30
fault replay 1 2 seq=1
expect balance 2 30
)");
    ASSERT_TRUE(r.passed()) << failures_of(r);
    EXPECT_EQ(r.sim->alert_count("replay"), 1u);
}

TEST(Simulator, ForgeBreaksConservation) {
    auto r = run_text(R"(
seed 7
enroll 2
register 1 2
issue 1 100
fault forge 1 100
transact 1 2 10
expect conservation violated
)");
    ASSERT_TRUE(r.passed()) << failures_of(r);
    auto v = r.sim->cm().check_conservation_now();
    EXPECT_EQ(v.discrepancy(), 100);
}

TEST(Simulator, CrashAndRecover) {
    auto r = run_text(R"(
seed 8
enroll 4
register all
issue 1 400
issue 2 400
random 30 min=1 max=20
fault crash 3
transact 1 3 5
recover 3
expect recovered 3
transact 1 3 5
expect consistent
expect conservation holds
)");
    ASSERT_TRUE(r.passed()) << failures_of(r);
    EXPECT_EQ(r.sim->error_count(Errc::PeerUnreachable), 1u);
    EXPECT_EQ(r.sim->node(3).balance(), r.sim->cm().open_balance(3));
}

TEST(Simulator, PartitionDelaysButConverges) {
    auto r = run_text(R"(
seed 9
enroll 3
register all
issue 1 300
fault partition-manager ticks=15
transact 1 2 50
issue 3 10
expect balance 2 50
expect alerts any 0
)");
    ASSERT_TRUE(r.passed()) << failures_of(r);
    EXPECT_EQ(r.sim->error_count(Errc::ManagerUnreachable), 1u);
}

TEST(Simulator, OmissionFailsOnlyCompleteness) {
    auto r = run_text(R"(
seed 10
enroll 2
register 1 2
issue 1 100
transact 1 2 10
transact 1 2 11
authorize 9 1 pairs=1:2
query 9 1 pair=1:2
expect verdict correct=yes complete=yes fresh=yes
fault omit 1 record=0
query 9 1 pair=1:2
expect verdict correct=yes complete=no fresh=yes
)");
    ASSERT_TRUE(r.passed()) << failures_of(r);
}

TEST(Simulator, MissingDetectionIsAFailure) {
    // Armed, but no transaction ever reports the tampered tree.
    auto r = run_text(R"(
seed 11
enroll 2
register 1 2
issue 1 100
transact 1 2 10
fault tamper 1 2
)");
    EXPECT_FALSE(r.passed());
}

TEST(Simulator, FailedAssertionIsReported) {
    auto r = run_text("seed 1\nenroll 1\nissue 1 10\nexpect balance 1 11\n");
    ASSERT_EQ(r.failures.size(), 1u);
    EXPECT_NE(r.failures[0].find("line 4"), std::string::npos);
}

TEST(Simulator, DelayedDeliveryMatchesInstant) {
    constexpr std::string_view body = R"(
deadline 400
enroll 5
register all
issue 1 1000
issue 2 1000
random 60 min=1 max=40
)";
    auto base = run_text(std::string("seed 30\n") + std::string(body));
    ASSERT_TRUE(base.passed()) << failures_of(base);
    for (int i = 0; i < 5; ++i) {
        auto policy = "seed 30\npolicy delay=0." + std::to_string(2 + i) + " max-delay=" + std::to_string(3 + i) +
                      " duplicate=0.3\n";
        auto r = run_text(policy + std::string(body));
        ASSERT_TRUE(r.passed()) << failures_of(r);
        EXPECT_EQ(r.sim->state_digest(), base.sim->state_digest()) << policy;
        EXPECT_EQ(r.sim->in_flight(), 0u);
    }
}

TEST(Simulator, CaptureDeterminismAndSensitivity) {
    SimConfig cfg;
    cfg.seed = 2;
    Simulator sim(cfg);
    expect_errc(Errc::EmptyGrid, [&] { sim.capture(0); });
    sim.enroll();
    sim.enroll();
    sim.register_all();
    sim.issue(1, 100);
    auto a = sim.capture(1);
    auto b = sim.capture(1);
    EXPECT_EQ(a.grid_hash, b.grid_hash);
    sim.transact(1, 2, 5);
    auto c = sim.capture(1);
    EXPECT_NE(a.grid_hash, c.grid_hash);
    EXPECT_EQ(sim.grids().size(), 3u);
}

TEST(Simulator, UnknownTargetThrows) {
    expect_errc(Errc::UnknownTarget, [] { run_text("seed 1\nenroll 2\nfault crash 7\n"); });
    Simulator sim;
    sim.enroll();
    FaultSpec f;
    f.kind = FaultSpec::Kind::ForgeBalance;
    f.targets = {4};
    expect_errc(Errc::UnknownTarget, [&] { sim.inject(f); });
}

TEST(Simulator, StepLimit) {
    auto s = parse_scenario(kBusy);
    expect_errc(Errc::StepLimitExceeded, [&] { run(s, std::nullopt, 50); });
}

TEST(Simulator, SaveStateWritesArtifacts) {
    auto r = run_text(std::string(kTwoClientTransfer) + "capture 1\n");
    auto dir = std::filesystem::temp_directory_path() / "dmoney-sim-state";
    std::filesystem::remove_all(dir);
    r.sim->save_state(dir);
    for (auto name : {"keys.txt", "client-1.snap", "client-2.snap", "manager.tbl", "grid-1.txt", "attestations.txt"})
        EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
    std::ifstream in(dir / "manager.tbl", std::ios::binary);
    Bytes tbl((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto table = TemporalBalanceTable::decode(tbl);
    EXPECT_EQ(table.sum_open(), 3000);
    std::filesystem::remove_all(dir);
}

TEST(Scenario, TextGrammar) {
    auto s = parse_scenario(R"(# comment
seed 42
policy delay=0.5 max-delay=4
enroll 3 limit=900   # trailing comment
label 7 "May 18 3 PM"
authorize 9 1 pairs=1:2,1:3 balances
query 9 1 balances from=2
fault partition-manager ticks=5
expect verdict correct=yes
)");
    EXPECT_EQ(s.seed, 42u);
    ASSERT_EQ(s.steps.size(), 7u);
    EXPECT_EQ(s.steps[0].opt_real("delay", 0), 0.5);
    EXPECT_EQ(s.steps[1].opt_u64("limit", 0), 900u);
    EXPECT_EQ(s.steps[2].args[1], "May 18 3 PM");
    EXPECT_TRUE(s.steps[3].has("balances"));
    EXPECT_EQ(s.steps[3].opt("pairs"), "1:2,1:3");
    EXPECT_EQ(parse_pair("3:1"), (PairKey{1, 3}));
}

TEST(Scenario, ParseErrorsNameTheLine) {
    for (auto bad : {"bogus 1", "enroll", "enroll x", "issue 1", "transact 1 2 -5", "policy speed=3",
                     "query 9 1 nonsense", "fault teleport 1", "expect balance 1", "label 3 \"open quote",
                     "register 1", "seed 1 2"}) {
        try {
            parse_scenario(std::string("seed 1\n") + bad + "\n");
            ADD_FAILURE() << "accepted: " << bad;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::ScenarioParseError) << bad;
            EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
        }
    }
    expect_errc(Errc::ScenarioParseError, [] { parse_pair("1-2"); });
}

TEST(Scenario, JsonMatchesText) {
    auto text = parse_scenario(kTwoClientTransfer);
    auto json = parse_scenario_json(R"({"seed": 4, "steps": [
        {"op": "enroll", "args": [2]},
        {"op": "register", "args": [1, 2]},
        {"op": "issue", "args": [1, 1000]},
        {"op": "issue", "args": [2, 2000]},
        {"op": "transact", "args": [2, 1, 500]},
        {"op": "expect", "args": ["balance", 1, 1500]},
        {"op": "expect", "args": ["balance", 2, 1500]},
        {"op": "expect", "args": ["conservation", "holds"]}
    ]})");
    ASSERT_EQ(json.steps.size(), text.steps.size());
    for (std::size_t i = 0; i < json.steps.size(); ++i) EXPECT_EQ(json.steps[i].str(), text.steps[i].str());
    EXPECT_EQ(run(json).sim->state_digest(), run(text).sim->state_digest());
    EXPECT_EQ(parse_scenario_any("  {\"seed\": 1, \"steps\": []}").seed, 1u);
    expect_errc(Errc::ScenarioParseError, [] { parse_scenario_json("{\"steps\": 3}"); });
    expect_errc(Errc::ScenarioParseError, [] { parse_scenario_json("[1,"); });
}
