#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "dmoney/client_node.hpp"
#include "dmoney/currency_manager.hpp"
#include "dmoney/data_client.hpp"
#include "dmoney/integrity_manager.hpp"
#include "dmoney/scenario.hpp"

namespace dmoney {

/// How manager-bound messages and their acknowledgements travel. Every
/// message is retransmitted until acknowledged, so any drop rate below 1
/// eventually delivers.
struct DeliveryPolicy {
    double delay = 0.0;      // chance of extra latency
    Tick max_delay = 0;      // extra latency is 1..max_delay
    double duplicate = 0.0;  // chance of a second copy
    double drop = 0.0;

    static DeliveryPolicy instant() { return {}; }
};

struct FaultSpec {
    enum class Kind : std::uint8_t {
        TamperLeaf,
        DoubleSpend,
        ReplayReport,
        ForgeBalance,
        CrashClient,
        PartitionManager,
        OmitRecordInQuery,
    };

    Kind kind = Kind::TamperLeaf;
    std::vector<ClientId> targets;
    Amount amount = 0;
    /// Leaf (TamperLeaf), sequence (ReplayReport) or record (OmitRecordInQuery).
    std::optional<std::uint64_t> index;
    std::optional<std::size_t> byte;
    Tick duration = 0;
};

std::string_view to_string(FaultSpec::Kind kind) noexcept;
/// The single detection each fault must produce.
std::string_view expected_detection(FaultSpec::Kind kind) noexcept;

/// `tick|actor|event|details`
struct LogLine {
    Tick tick = 0;
    std::string actor;
    std::string event;
    std::string details;

    std::string str() const;
};

class SimulationLog {
public:
    void add(Tick tick, std::string actor, std::string event, std::string details = {});
    const std::vector<LogLine>& lines() const noexcept { return lines_; }
    std::size_t count(std::string_view event, std::string_view details_substring = {}) const;
    std::string text() const;

private:
    std::vector<LogLine> lines_;
};

struct SimConfig {
    std::uint64_t seed = 0;
    std::size_t step_limit = 100'000;
    Tick reporting_deadline = 10;
    DeliveryPolicy policy;
    std::size_t mht_order = BalanceMHT::kDefaultOrder;
    /// Keyed-hash signatures instead of Ed25519, for large batch runs.
    bool fast_signatures = false;
};

/// A protocol message between a client and a manager.
struct Message {
    enum class Kind : std::uint8_t { Report, Leg, Ack };
    enum class Party : std::uint8_t { Client, Integrity, Currency };

    Kind kind = Kind::Report;
    std::uint64_t id = 0;
    ClientId client = 0;  // the client end of the exchange
    Party to = Party::Integrity;
    Party from = Party::Client;
    TransactionReport report;
    BalanceLeg leg;
    std::uint64_t acked = 0;
};

struct SimEvent {
    enum class Kind : std::uint8_t { Deliver, Timeout };
    enum class Delivery : std::uint8_t { Normal, Delayed, Duplicated };

    Kind kind = Kind::Deliver;
    Tick tick = 0;
    Delivery delivery = Delivery::Normal;
    Message message;
};

/// Deterministic discrete-event world: one Currency Manager (with its issuing
/// peer node), one Integrity Manager, clients and data clients.
class Simulator {
public:
    explicit Simulator(SimConfig config = {});
    ~Simulator();
    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    // Set-up -----------------------------------------------------------
    ClientId enroll(Amount limit = kNoLimit);
    void register_pair(ClientId a, ClientId b);
    void register_all();
    void set_policy(DeliveryPolicy policy) { config_.policy = policy; }
    void label(Tick tick, std::string text) { labels_[tick] = std::move(text); }

    // Actions; protocol errors are logged and counted, not thrown. -----
    bool issue(ClientId client, Amount amount);
    bool redeem(ClientId client, Amount amount);
    bool transact(ClientId payer, ClientId payee, Amount amount);
    void random_transactions(std::size_t count, Amount min_amount, Amount max_amount);
    void persist(ClientId client);
    bool recover(ClientId client);
    std::optional<Amount> recover_balance(ClientId client);
    void reset_epoch(ClientId a, ClientId b);
    bool repair(ClientId a, ClientId b, std::uint64_t pair_seq);
    void suspend(ClientId client);
    void reinstate(ClientId client);
    void authorize(std::uint64_t data_client, ClientId subject, std::set<PairKey> pairs, bool balances);
    std::optional<Verdict> query_pair(std::uint64_t data_client, ClientId subject, PairKey pair,
                                      std::uint64_t seq_lo, std::uint64_t seq_hi);
    std::optional<Verdict> query_balances(std::uint64_t data_client, ClientId subject, BalanceKey lo,
                                          BalanceKey hi);

    /// Throws UnknownTarget.
    void inject(const FaultSpec& fault);

    // Time -------------------------------------------------------------
    /// Moves the clock forward, delivering everything due.
    void advance(Tick ticks = 1);
    /// Runs until no message is in flight. Throws StepLimitExceeded.
    void quiesce();
    MerkleHashGrid capture(std::uint64_t epoch);

    // Inspection -------------------------------------------------------
    Tick now() const noexcept { return now_; }
    const SimulationLog& log() const noexcept { return log_; }
    const CurrencyManager& cm() const noexcept { return cm_; }
    const IntegrityManager& im() const noexcept { return *im_; }
    const ClientNode& node(ClientId id) const;
    const ClientNode& bank() const noexcept { return *bank_; }
    /// Enrolled, not disenrolled, in enrollment order.
    std::vector<ClientId> clients() const;
    const std::vector<MerkleHashGrid>& grids() const noexcept { return grids_; }
    const std::optional<Verdict>& last_verdict() const noexcept { return last_verdict_; }
    std::size_t error_count(Errc code) const;
    std::size_t alert_count(const std::string& kind) const;
    std::size_t event_count(const std::string& kind) const;
    const SignatureScheme& scheme() const noexcept { return *scheme_; }
    AttestingKeys attesting_keys() const;
    std::size_t in_flight() const noexcept { return outbox_.size(); }
    std::size_t failed_commits() const noexcept { return failed_commits_; }
    const std::vector<std::pair<Tick, FaultSpec>>& faults() const noexcept { return faults_; }
    /// true iff the client's roots equal those it had when it crashed.
    std::optional<bool> recovered_identical(ClientId client) const;
    /// Validated and settled state: every PTTR the IM holds, every settled
    /// MHTR and open balance, as comparable text.
    std::string state_digest() const;

    /// One line per injected fault that lacks its detection, or per alert
    /// raised in a run without faults.
    std::vector<std::string> unmet_detections() const;

    /// Writes keys, client snapshots, the balance table, grids, labels and
    /// the latest attestations.
    void save_state(const std::filesystem::path& dir) const;

    /// Lets a test interfere between commit and report.
    void set_before_report(BeforeReportHook hook) { external_hook_ = std::move(hook); }

    /// Appends a line to the log at the current tick.
    void note(std::string actor, std::string event, std::string details = {}) {
        log_.add(now_, std::move(actor), std::move(event), std::move(details));
    }

private:
    struct Outgoing {
        Message message;
        int attempts = 0;
    };
    struct ErrorEntry {
        Tick tick;
        Errc code;
        ClientId subject;
    };

    ClientNode& mut_node(ClientId id);
    void require(ClientId id) const;
    std::string actor(ClientId id) const;
    static std::string ids_of(const std::vector<ClientId>& v);
    void record_error(const std::string& who, const Error& e, ClientId subject);
    void log_roots(const ClientNode& n);

    bool chance(double p);
    void send(Message m);
    void transmit(const Message& m);
    void schedule(SimEvent e);
    void process(const SimEvent& e);
    void deliver(const Message& m);
    void drain_manager_output();
    bool partitioned() const noexcept { return now_ < partition_until_; }
    bool manager_reachable(const std::string& who, ClientId subject);

    bool run_transaction(ClientId payer, ClientId payee, Amount amount, TransactionOutcome* result = nullptr);
    void report_outcome(const TransactionOutcome& t);
    Attestation pair_statement(PairKey pair) const;
    std::optional<Verdict> answer(std::uint64_t data_client, ClientId subject,
                                  const std::function<VerificationObject(const Grant&)>& build,
                                  const std::function<Attestation()>& latest);

    SimConfig config_;
    std::mt19937_64 rng_;
    std::mt19937_64 net_rng_;
    std::unique_ptr<SignatureScheme> scheme_;
    CurrencyManager cm_;
    std::unique_ptr<IntegrityManager> im_;
    KeyHandle im_key_;
    std::unique_ptr<ClientNode> bank_;
    std::map<ClientId, std::unique_ptr<ClientNode>> nodes_;
    std::set<PairKey> registered_;

    Tick now_ = 0;
    std::uint64_t next_msg_ = 1;
    std::uint64_t insertion_ = 0;
    std::size_t steps_ = 0;
    std::map<std::pair<Tick, std::uint64_t>, SimEvent> queue_;
    std::map<std::pair<ClientId, std::uint64_t>, Outgoing> outbox_;
    std::set<std::tuple<ClientId, std::uint8_t, std::uint64_t>> seen_;
    Tick partition_until_ = 0;

    SimulationLog log_;
    std::map<Errc, std::size_t> errors_;
    std::vector<ErrorEntry> error_log_;
    std::map<std::string, std::size_t> alerts_;
    std::map<std::string, std::size_t> events_;
    std::vector<std::pair<Tick, ManagerEvent>> manager_events_;
    std::map<Tick, std::string> labels_;
    std::vector<MerkleHashGrid> grids_;
    std::size_t failed_commits_ = 0;

    std::vector<std::pair<Tick, FaultSpec>> faults_;
    std::optional<FaultSpec> armed_tamper_;
    std::map<ClientId, Amount> armed_forge_;
    std::map<ClientId, std::uint64_t> armed_omit_;
    std::set<ClientId> crashed_;
    std::map<ClientId, std::pair<std::map<PairKey, Digest>, Digest>> crash_roots_;
    std::map<ClientId, Bytes> snapshots_;
    std::map<std::tuple<ClientId, PairKey, std::uint64_t>, TransactionReport> sent_reports_;
    std::map<std::uint64_t, Grant> grants_;
    std::vector<std::pair<Tick, Verdict>> verdicts_;
    std::optional<Verdict> last_verdict_;
    BeforeReportHook external_hook_;
};

struct RunResult {
    SimulationLog log;
    std::vector<std::string> failures;
    std::unique_ptr<Simulator> sim;

    bool passed() const noexcept { return failures.empty(); }
};

/// Executes a scenario to the end, quiesces and checks fault detection.
/// Throws ScenarioParseError, StepLimitExceeded, UnknownTarget.
RunResult run(const Scenario& scenario, std::optional<std::uint64_t> seed = std::nullopt,
              std::size_t step_limit = 100'000);

}  // namespace dmoney
