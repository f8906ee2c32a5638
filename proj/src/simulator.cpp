#include "dmoney/simulator.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dmoney/error.hpp"

namespace dmoney {

std::string_view to_string(FaultSpec::Kind kind) noexcept {
    switch (kind) {
        case FaultSpec::Kind::TamperLeaf: return "TamperLeaf";
        case FaultSpec::Kind::DoubleSpend: return "DoubleSpend";
        case FaultSpec::Kind::ReplayReport: return "ReplayReport";
        case FaultSpec::Kind::ForgeBalance: return "ForgeBalance";
        case FaultSpec::Kind::CrashClient: return "CrashClient";
        case FaultSpec::Kind::PartitionManager: return "PartitionManager";
        case FaultSpec::Kind::OmitRecordInQuery: return "OmitRecordInQuery";
    }
    return "?";
}

std::string_view expected_detection(FaultSpec::Kind kind) noexcept {
    switch (kind) {
        case FaultSpec::Kind::TamperLeaf: return "RootMismatch alert naming the pair";
        case FaultSpec::Kind::DoubleSpend: return "StaleProvenance at the Currency Manager";
        case FaultSpec::Kind::ReplayReport: return "replay alert at the Integrity Manager";
        case FaultSpec::Kind::ForgeBalance: return "ConservationViolation at the Currency Manager";
        case FaultSpec::Kind::CrashClient: return "PeerUnreachable until recovery";
        case FaultSpec::Kind::PartitionManager: return "ManagerUnreachable during the partition";
        case FaultSpec::Kind::OmitRecordInQuery: return "verification object fails completeness";
    }
    return "?";
}

std::string LogLine::str() const {
    return std::to_string(tick) + "|" + actor + "|" + event + "|" + details;
}

void SimulationLog::add(Tick tick, std::string actor, std::string event, std::string details) {
    lines_.push_back({tick, std::move(actor), std::move(event), std::move(details)});
}

std::size_t SimulationLog::count(std::string_view event, std::string_view details_substring) const {
    return static_cast<std::size_t>(std::count_if(lines_.begin(), lines_.end(), [&](const LogLine& l) {
        return l.event == event && l.details.find(details_substring) != std::string::npos;
    }));
}

std::string SimulationLog::text() const {
    std::string out;
    for (const auto& l : lines_) out += l.str() + "\n";
    return out;
}

namespace {

std::string_view event_name(ManagerEvent::Kind k) {
    switch (k) {
        case ManagerEvent::Kind::Settled: return "Settled";
        case ManagerEvent::Kind::StaleProvenance: return "StaleProvenance";
        case ManagerEvent::Kind::LegMismatch: return "LegMismatch";
        case ManagerEvent::Kind::ConservationViolation: return "ConservationViolation";
        case ManagerEvent::Kind::Suspended: return "Suspended";
    }
    return "?";
}

std::string ids(const std::vector<ClientId>& v) {
    std::string out;
    for (auto id : v) out += (out.empty() ? "" : ",") + std::to_string(id);
    return out;
}

std::string short_hex(const Digest& d) { return d.hex().substr(0, 16); }

Bytes key_seed(std::uint64_t seed, std::string_view role, std::uint64_t id) {
    Encoder e;
    e.raw(ByteView(reinterpret_cast<const std::uint8_t*>(role.data()), role.size())).u64(seed).u64(id);
    return std::move(e).bytes();
}

constexpr ClientId kIntegrityOwner = ~ClientId{0};

}  // namespace

Simulator::Simulator(SimConfig config) : config_(config), rng_(config.seed), net_rng_(config.seed ^ 0x6e6574776f726bULL) {
    if (config_.fast_signatures)
        scheme_ = std::make_unique<KeyedHashScheme>();
    else
        scheme_ = std::make_unique<Ed25519Scheme>();
    im_key_ = scheme_->generate(kIntegrityOwner, key_seed(config_.seed, "im", 0));
    im_ = std::make_unique<IntegrityManager>(*scheme_, im_key_,
                                             IntegrityManager::Config{config_.reporting_deadline, false});
    bank_ = std::make_unique<ClientNode>(kCurrencyManagerId, *scheme_,
                                         scheme_->generate(kCurrencyManagerId, key_seed(config_.seed, "cm", 0)),
                                         true, config_.mht_order);
    log_.add(now_, "sim", "start", "seed=" + std::to_string(config_.seed) + " scheme=" + scheme_->name());
}

Simulator::~Simulator() = default;

std::string Simulator::actor(ClientId id) const { return id == kCurrencyManagerId ? "bank" : "c" + std::to_string(id); }

void Simulator::require(ClientId id) const {
    if (id == kCurrencyManagerId || nodes_.count(id) == 0)
        throw Error(Errc::UnknownTarget, "no client " + std::to_string(id));
}

const ClientNode& Simulator::node(ClientId id) const {
    if (id == kCurrencyManagerId) return *bank_;
    require(id);
    return *nodes_.at(id);
}

ClientNode& Simulator::mut_node(ClientId id) {
    if (id == kCurrencyManagerId) return *bank_;
    require(id);
    return *nodes_.at(id);
}

std::vector<ClientId> Simulator::clients() const {
    std::vector<ClientId> out;
    for (auto id : cm_.clients())
        if (cm_.client(id).status != ClientStatus::Disenrolled) out.push_back(id);
    return out;
}

void Simulator::record_error(const std::string& who, const Error& e, ClientId subject) {
    ++errors_[e.code()];
    error_log_.push_back({now_, e.code(), subject});
    log_.add(now_, who, "error", e.what());
}

void Simulator::log_roots(const ClientNode& n) {
    if (n.issuer()) return;
    log_.add(now_, actor(n.id()), "mhtr", n.mhtr().hex() + " balance=" + std::to_string(n.balance()));
}

// Set-up ---------------------------------------------------------------------

ClientId Simulator::enroll(Amount limit) {
    auto owner = cm_.clients().size() + 1;
    auto key = scheme_->generate(owner, key_seed(config_.seed, "client", owner));
    auto id = cm_.enroll(scheme_->public_key(key), limit);
    im_->admit_client(id);
    auto node = std::make_unique<ClientNode>(id, *scheme_, key, false, config_.mht_order);
    node->set_limit(limit);
    nodes_.emplace(id, std::move(node));
    log_.add(now_, "cm", "enroll", "client=" + std::to_string(id));
    return id;
}

void Simulator::register_pair(ClientId a, ClientId b) {
    require(a);
    require(b);
    try {
        cm_.register_pair(a, b, true, true);
        im_->admit_pair(PairKey::of(a, b));
        registered_.insert(PairKey::of(a, b));
        log_.add(now_, "cm", "register", PairKey::of(a, b).str());
    } catch (const Error& e) {
        record_error("cm", e, a);
    }
}

void Simulator::register_all() {
    auto ids = clients();
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = i + 1; j < ids.size(); ++j)
            if (!registered_.count(PairKey::of(ids[i], ids[j]))) register_pair(ids[i], ids[j]);
}

// Network --------------------------------------------------------------------

namespace {

std::string party_name(Message::Party p, ClientId client) {
    switch (p) {
        case Message::Party::Integrity: return "im";
        case Message::Party::Currency: return "cm";
        case Message::Party::Client: break;
    }
    return client == kCurrencyManagerId ? "bank" : "c" + std::to_string(client);
}

std::string describe(const Message& m) {
    std::string out = "msg=" + std::to_string(m.id) + " ";
    switch (m.kind) {
        case Message::Kind::Report:
            out += "report pair=" + m.report.pair.str() + " seq=" + std::to_string(m.report.pair_seq) +
                   " pttr=" + short_hex(m.report.pttr);
            break;
        case Message::Kind::Leg:
            out += "leg client=" + std::to_string(m.leg.client) + " peer=" + std::to_string(m.leg.peer) +
                   " seq=" + std::to_string(m.leg.pair_seq) + " balance=" + std::to_string(m.leg.new_balance);
            break;
        case Message::Kind::Ack: out += "ack of " + std::to_string(m.acked); break;
    }
    return out;
}

}  // namespace

bool Simulator::chance(double p) {
    if (p <= 0.0) return false;
    return static_cast<double>(net_rng_() >> 11) * 0x1.0p-53 < p;
}

void Simulator::schedule(SimEvent e) { queue_.emplace(std::make_pair(e.tick, insertion_++), std::move(e)); }

void Simulator::send(Message m) {
    m.id = next_msg_++;
    log_.add(now_, party_name(m.from, m.client), "send", describe(m));
    if (m.kind != Message::Kind::Ack) outbox_[{m.client, m.id}] = Outgoing{m, 0};
    transmit(m);
    if (m.kind != Message::Kind::Ack) schedule({SimEvent::Kind::Timeout, now_ + 4, SimEvent::Delivery::Normal, m});
}

void Simulator::transmit(const Message& m) {
    const auto& p = config_.policy;
    auto from = party_name(m.from, m.client);
    if (partitioned()) {
        log_.add(now_, from, "drop", "partition " + describe(m));
        return;
    }
    if (chance(p.drop)) {
        log_.add(now_, from, "drop", describe(m));
        return;
    }
    SimEvent e{SimEvent::Kind::Deliver, now_ + 1, SimEvent::Delivery::Normal, m};
    if (p.max_delay > 0 && chance(p.delay)) {
        e.tick += 1 + net_rng_() % p.max_delay;
        e.delivery = SimEvent::Delivery::Delayed;
    }
    auto at = e.tick;
    schedule(e);
    if (chance(p.duplicate)) {
        e.tick = at + 1 + net_rng_() % 3;
        e.delivery = SimEvent::Delivery::Duplicated;
        schedule(e);
    }
}

void Simulator::process(const SimEvent& e) {
    if (++steps_ > config_.step_limit)
        throw Error(Errc::StepLimitExceeded, "more than " + std::to_string(config_.step_limit) + " events");
    if (e.kind == SimEvent::Kind::Timeout) {
        auto it = outbox_.find({e.message.client, e.message.id});
        if (it == outbox_.end()) return;
        auto& out = it->second;
        ++out.attempts;
        log_.add(now_, party_name(out.message.from, out.message.client), "retry",
                 "attempt=" + std::to_string(out.attempts + 1) + " " + describe(out.message));
        transmit(out.message);
        Tick rto = std::min<Tick>(Tick{4} << std::min(out.attempts, 4), 64);
        schedule({SimEvent::Kind::Timeout, now_ + rto, SimEvent::Delivery::Normal, out.message});
        return;
    }
    if (partitioned()) {
        log_.add(now_, party_name(e.message.to, e.message.client), "drop", "partition " + describe(e.message));
        return;
    }
    deliver(e.message);
}

void Simulator::deliver(const Message& m) {
    auto to = party_name(m.to, m.client);
    if (m.kind == Message::Kind::Ack) {
        if (outbox_.erase({m.client, m.acked}) > 0) log_.add(now_, to, "acked", std::to_string(m.acked));
        return;
    }
    auto key = std::make_tuple(m.client, static_cast<std::uint8_t>(m.to), m.id);
    bool fresh = seen_.insert(key).second;
    log_.add(now_, to, fresh ? "deliver" : "duplicate", describe(m));
    if (fresh) {
        try {
            if (m.kind == Message::Kind::Report) {
                auto out = im_->ingest_report(m.report, now_);
                if (out.kind == ValidationOutcome::Kind::Validated)
                    log_.add(now_, "im", "validated",
                             m.report.pair.str() + " seq=" + std::to_string(m.report.pair_seq) +
                                 " pttr=" + m.report.pttr.hex());
            } else {
                auto out = cm_.report_balance(m.leg);
                static const char* names[] = {"pending", "settled", "duplicate", "stale"};
                log_.add(now_, "cm", "leg", std::string(names[static_cast<int>(out.kind)]) + " client=" +
                                                std::to_string(m.leg.client) + " seq=" +
                                                std::to_string(m.leg.pair_seq));
            }
        } catch (const Error& e) {
            record_error(m.to == Message::Party::Integrity ? "im" : "cm", e, m.client);
        }
        drain_manager_output();
    }
    Message ack;
    ack.kind = Message::Kind::Ack;
    ack.client = m.client;
    ack.from = m.to;
    ack.to = Message::Party::Client;
    ack.acked = m.id;
    send(ack);
}

void Simulator::drain_manager_output() {
    for (const auto& a : im_->drain_alerts()) {
        auto kind = std::string(to_string(a.kind));
        ++alerts_[kind];
        if (a.note == "replay") ++alerts_["replay"];
        log_.add(now_, "im", "alert",
                 kind + " pair=" + a.pair.str() + " seq=" + std::to_string(a.pair_seq) + " subjects=" +
                     ids(a.subjects) + (a.note.empty() ? "" : " note=" + a.note));
    }
    for (auto& e : cm_.drain_events()) {
        auto kind = std::string(event_name(e.kind));
        ++events_[kind];
        std::string details = "subjects=" + ids(e.subjects);
        if (e.kind != ManagerEvent::Kind::Suspended)
            details += " pair=" + e.pair.str() + " seq=" + std::to_string(e.pair_seq);
        if (e.discrepancy != 0) details += " discrepancy=" + std::to_string(e.discrepancy);
        if (!e.detail.empty()) details += " " + e.detail;
        log_.add(now_, "cm", kind, details);
        manager_events_.push_back({now_, std::move(e)});
    }
}

void Simulator::advance(Tick ticks) {
    for (Tick i = 0; i < ticks; ++i) {
        ++now_;
        while (!queue_.empty() && queue_.begin()->first.first <= now_) {
            auto e = std::move(queue_.begin()->second);
            queue_.erase(queue_.begin());
            process(e);
        }
        im_->expire(now_);
        drain_manager_output();
    }
}

void Simulator::quiesce() {
    while (!queue_.empty()) {
        auto next = queue_.begin()->first.first;
        if (next > now_) {
            advance(next - now_);
        } else {
            auto e = std::move(queue_.begin()->second);
            queue_.erase(queue_.begin());
            process(e);
        }
    }
    drain_manager_output();
}

bool Simulator::manager_reachable(const std::string& who, ClientId subject) {
    if (!partitioned()) return true;
    record_error(who, Error(Errc::ManagerUnreachable, "partitioned until tick " + std::to_string(partition_until_)),
                 subject);
    return false;
}

// Transactions ---------------------------------------------------------------

bool Simulator::run_transaction(ClientId payer, ClientId payee, Amount amount, TransactionOutcome* result) {
    for (auto id : {payer, payee})
        if (crashed_.count(id)) {
            record_error(actor(payer == id ? payee : payer),
                         Error(Errc::PeerUnreachable, actor(id) + " is down"), id);
            return false;
        }
    auto& a = mut_node(payer);
    auto& b = mut_node(payee);
    auto pair = PairKey::of(payer, payee);

    BeforeReportHook hook = [&](ClientNode& p, ClientNode& q) {
        if (external_hook_) external_hook_(p, q);
        if (!armed_tamper_ || PairKey::of(armed_tamper_->targets[0], armed_tamper_->targets[1]) != pair) return;
        auto& holder = armed_tamper_->targets[0] == p.id() ? p : q;
        auto& t = holder.ptt(pair.other(holder.id()));
        auto leaf = std::min<std::uint64_t>(armed_tamper_->index.value_or(t.size() - 1), t.size() - 1);
        auto byte = armed_tamper_->byte.value_or(net_rng_() % TransactionPairRecord::kEncodedSize) %
                    TransactionPairRecord::kEncodedSize;
        t.corrupt_leaf(leaf, byte, 0xff);
        log_.add(now_, actor(holder.id()), "tampered",
                 pair.str() + " leaf=" + std::to_string(leaf) + " byte=" + std::to_string(byte));
        armed_tamper_.reset();
    };

    TransactionOutcome t;
    try {
        t = dmoney::transact(a, b, amount, now_, cm_.pair_active(payer, payee), hook);
    } catch (const Error& e) {
        record_error(actor(payer), e, payer);
        return false;
    }
    const auto seq = std::to_string(t.record.pair_seq);
    log_.add(now_, actor(payer), "propose",
             "to=" + std::to_string(payee) + " seq=" + seq + " amount=" + std::to_string(amount));
    log_.add(now_, actor(payee), "accept", "from=" + std::to_string(payer) + " seq=" + seq);
    if (!t.committed()) {
        ++failed_commits_;
        log_.add(now_, actor(payer), "commit-failed", pair.str() + " seq=" + seq);
        return false;
    }
    log_.add(now_, actor(payer), "commit", pair.str() + " seq=" + seq + " pttr=" + t.payer_report.pttr.hex());
    log_.add(now_, actor(payee), "commit", pair.str() + " seq=" + seq + " pttr=" + t.payee_report.pttr.hex());
    log_roots(a);
    log_roots(b);
    report_outcome(t);
    if (result) *result = std::move(t);
    return true;
}

void Simulator::report_outcome(const TransactionOutcome& t) {
    for (const auto* r : {&t.payer_report, &t.payee_report}) {
        sent_reports_[{r->reporter, r->pair, r->pair_seq}] = *r;
        Message m;
        m.kind = Message::Kind::Report;
        m.client = r->reporter;
        m.to = Message::Party::Integrity;
        m.report = *r;
        send(m);
    }
    if (t.record.payer == kCurrencyManagerId || t.record.payee == kCurrencyManagerId) return;
    for (auto leg : {t.payer_leg, t.payee_leg}) {
        auto forge = armed_forge_.find(leg.client);
        if (forge != armed_forge_.end()) {
            leg.new_balance += forge->second;
            log_.add(now_, actor(leg.client), "forged", "seq=" + std::to_string(leg.pair_seq) +
                                                            " claimed=" + std::to_string(leg.new_balance));
            armed_forge_.erase(forge);
        }
        Message m;
        m.kind = Message::Kind::Leg;
        m.client = leg.client;
        m.to = Message::Party::Currency;
        m.leg = leg;
        send(m);
    }
}

bool Simulator::issue(ClientId client, Amount amount) {
    require(client);
    advance();
    if (!manager_reachable("cm", client)) return false;
    TransactionOutcome t;
    if (!run_transaction(kCurrencyManagerId, client, amount, &t)) return false;
    try {
        const auto& leg = t.payee_leg;
        cm_.issue(client, amount, now_, {leg.pair_seq, leg.prior_mhtr, leg.new_mhtr});
        log_.add(now_, "cm", "issue", "client=" + std::to_string(client) + " amount=" + std::to_string(amount));
    } catch (const Error& e) {
        record_error("cm", e, client);
        return false;
    }
    drain_manager_output();
    return true;
}

bool Simulator::redeem(ClientId client, Amount amount) {
    require(client);
    quiesce();
    advance();
    if (!manager_reachable("cm", client)) return false;
    if (cm_.pending_legs(client) > 0) {
        record_error("cm", Error(Errc::PendingSettlement, actor(client) + " has unsettled legs"), client);
        return false;
    }
    TransactionOutcome t;
    if (!run_transaction(client, kCurrencyManagerId, amount, &t)) return false;
    try {
        const auto& leg = t.payer_leg;
        cm_.redeem(client, amount, now_, {leg.pair_seq, leg.prior_mhtr, leg.new_mhtr});
        log_.add(now_, "cm", "redeem", "client=" + std::to_string(client) + " amount=" + std::to_string(amount));
    } catch (const Error& e) {
        record_error("cm", e, client);
        return false;
    }
    drain_manager_output();
    return true;
}

bool Simulator::transact(ClientId payer, ClientId payee, Amount amount) {
    require(payer);
    require(payee);
    advance();
    return run_transaction(payer, payee, amount);
}

void Simulator::random_transactions(std::size_t count, Amount min_amount, Amount max_amount) {
    std::vector<PairKey> pairs(registered_.begin(), registered_.end());
    if (pairs.empty() || max_amount < min_amount) return;
    for (std::size_t i = 0; i < count; ++i) {
        auto pair = pairs[rng_() % pairs.size()];
        bool forward = rng_() % 2 == 0;
        auto span = static_cast<std::uint64_t>(max_amount - min_amount + 1);
        auto amount = min_amount + static_cast<Amount>(rng_() % span);
        ClientId payer = forward ? pair.lo : pair.hi;
        ClientId payee = pair.other(payer);
        if (!crashed_.count(payer) && node(payer).balance() < amount) std::swap(payer, payee);
        if (!crashed_.count(payer)) amount = std::min(amount, node(payer).balance());
        if (amount <= 0) {
            advance();
            log_.add(now_, "sim", "skip", "no funds on " + pair.str());
            continue;
        }
        transact(payer, payee, amount);
    }
}

// Recovery -------------------------------------------------------------------

void Simulator::persist(ClientId client) {
    require(client);
    advance();
    snapshots_[client] = node(client).persist_snapshot();
    log_.add(now_, actor(client), "persist", "bytes=" + std::to_string(snapshots_[client].size()));
}

bool Simulator::recover(ClientId client) {
    require(client);
    quiesce();
    advance();
    auto& n = mut_node(client);
    try {
        auto snap = snapshots_.find(client);
        n.load_snapshot(snap == snapshots_.end() ? ByteView{} : ByteView(snap->second));
        std::map<PairKey, PeerTransactionTree> copies;
        auto take = [&](const ClientNode& partner) {
            if (const auto* t = partner.find_ptt(PairKey::of(client, partner.id()))) copies.emplace(t->key(), *t);
        };
        take(*bank_);
        for (const auto& [id, other] : nodes_)
            if (id != client && !crashed_.count(id)) take(*other);
        n.recover_transactions(copies, im_.get());
    } catch (const Error& e) {
        record_error(actor(client), e, client);
        return false;
    }
    crashed_.erase(client);
    std::string details = "pairs=" + std::to_string(n.pttrs().size()) + " mhtr=" + n.mhtr().hex();
    if (auto same = recovered_identical(client)) details += same.value() ? " identical=yes" : " identical=no";
    log_.add(now_, actor(client), "recovered", details);
    return true;
}

std::optional<bool> Simulator::recovered_identical(ClientId client) const {
    auto it = crash_roots_.find(client);
    if (it == crash_roots_.end() || crashed_.count(client)) return std::nullopt;
    const auto& n = node(client);
    return n.pttrs() == it->second.first && n.mhtr() == it->second.second;
}

std::optional<Amount> Simulator::recover_balance(ClientId client) {
    require(client);
    advance();
    if (!manager_reachable(actor(client), client)) return std::nullopt;
    quiesce();
    try {
        auto b = dmoney::recover_balance(&cm_, client);
        log_.add(now_, actor(client), "recover-balance",
                 std::to_string(b) + " local=" + (crashed_.count(client) ? "down" : std::to_string(node(client).balance())));
        return b;
    } catch (const Error& e) {
        record_error(actor(client), e, client);
        return std::nullopt;
    }
}

void Simulator::reset_epoch(ClientId a, ClientId b) {
    require(a);
    require(b);
    quiesce();
    advance();
    auto pair = PairKey::of(a, b);
    try {
        const auto* t = node(a).find_ptt(pair);
        if (!t) throw Error(Errc::EmptyTree, "no transactions on " + pair.str());
        auto epoch = t->epoch();
        reset_pair_epoch(mut_node(a), mut_node(b), pair);
        im_->archive(pair, epoch);
        log_.add(now_, "im", "archive", pair.str() + " epoch=" + std::to_string(epoch));
    } catch (const Error& e) {
        record_error(actor(a), e, a);
    }
}

bool Simulator::repair(ClientId a, ClientId b, std::uint64_t pair_seq) {
    require(a);
    require(b);
    quiesce();
    advance();
    ReparationRecord rec;
    try {
        rec = cm_.repair(PairKey::of(a, b), pair_seq);
    } catch (const Error& e) {
        record_error("cm", e, a);
        return false;
    }
    log_.add(now_, "cm", "repair",
             rec.pair.str() + " seq=" + std::to_string(pair_seq) + " reversal=" + std::to_string(rec.payer) + "->" +
                 std::to_string(rec.payee) + " amount=" + std::to_string(rec.amount));
    return run_transaction(rec.payer, rec.payee, rec.amount);
}

void Simulator::suspend(ClientId client) {
    require(client);
    advance();
    cm_.suspend(client, "ordered by scenario");
    mut_node(client).set_status(ClientStatus::Suspended);
    drain_manager_output();
}

void Simulator::reinstate(ClientId client) {
    require(client);
    advance();
    cm_.reinstate(client);
    mut_node(client).set_status(ClientStatus::Active);
    log_.add(now_, "cm", "reinstate", "client=" + std::to_string(client));
}

// Data clients ---------------------------------------------------------------

AttestingKeys Simulator::attesting_keys() const { return {im_->public_key(), bank_->public_key()}; }

Attestation Simulator::pair_statement(PairKey pair) const {
    const auto* t = node(pair.lo == kCurrencyManagerId ? pair.hi : pair.lo).find_ptt(pair);
    if (!t) throw Error(Errc::UnknownTransaction, "no transactions on " + pair.str());
    return im_->attest_pair(pair, t->epoch(), t->first_seq(), now_);
}

void Simulator::authorize(std::uint64_t data_client, ClientId subject, std::set<PairKey> pairs, bool balances) {
    advance();
    try {
        grants_[data_client] = dmoney::authorize(cm_, data_client, subject, std::move(pairs), balances);
        log_.add(now_, "dc" + std::to_string(data_client), "granted", "subject=" + std::to_string(subject));
    } catch (const Error& e) {
        record_error("dc" + std::to_string(data_client), e, subject);
    }
}

namespace {

std::string verdict_text(const Verdict& v) {
    return std::string("correct=") + (v.correct ? "1" : "0") + " complete=" + (v.complete ? "1" : "0") +
           " fresh=" + (v.fresh ? "1" : "0");
}

}  // namespace

std::optional<Verdict> Simulator::answer(std::uint64_t data_client, ClientId subject,
                                         const std::function<VerificationObject(const Grant&)>& build,
                                         const std::function<Attestation()>& latest) {
    require(subject);
    advance();
    auto who = "dc" + std::to_string(data_client);
    try {
        auto g = grants_.find(data_client);
        if (g == grants_.end()) throw Error(Errc::ScopeViolation, who + " holds no grant");
        if (crashed_.count(subject)) throw Error(Errc::PeerUnreachable, actor(subject) + " is down");
        auto vo = build(g->second);
        auto omit = armed_omit_.find(subject);
        if (omit != armed_omit_.end()) {
            auto n = vo.kind == VerificationObject::Kind::TransactionInclusion ? vo.records.size()
                                                                               : vo.balance_records.size();
            if (n > 0) {
                auto idx = std::min<std::uint64_t>(omit->second, n - 1);
                vo.omit_record(idx);
                log_.add(now_, actor(subject), "omitted", "record=" + std::to_string(idx));
                armed_omit_.erase(omit);
            }
        }
        log_.add(now_, actor(subject), "vo", "bytes=" + std::to_string(vo.encode().size()));
        auto v = verify_vo(*scheme_, vo, attesting_keys(), latest());
        log_.add(now_, who, "verdict", verdict_text(v));
        verdicts_.push_back({now_, v});
        last_verdict_ = v;
        return v;
    } catch (const Error& e) {
        record_error(who, e, subject);
        return std::nullopt;
    }
}

std::optional<Verdict> Simulator::query_pair(std::uint64_t data_client, ClientId subject, PairKey pair,
                                             std::uint64_t seq_lo, std::uint64_t seq_hi) {
    return answer(
        data_client, subject,
        [&](const Grant& g) { return query_transactions(g, node(subject), *im_, pair, seq_lo, seq_hi, now_); },
        [&] { return pair_statement(pair); });
}

std::optional<Verdict> Simulator::query_balances(std::uint64_t data_client, ClientId subject, BalanceKey lo,
                                                 BalanceKey hi) {
    auto statement = [&] { return attest_balance_root(cm_, *scheme_, bank_->key(), subject, now_); };
    return answer(
        data_client, subject,
        [&](const Grant& g) { return dmoney::query_balances(g, node(subject), statement(), lo, hi); }, statement);
}

// Faults ---------------------------------------------------------------------

void Simulator::inject(const FaultSpec& fault) {
    std::size_t need = 0;
    switch (fault.kind) {
        case FaultSpec::Kind::TamperLeaf:
        case FaultSpec::Kind::ReplayReport: need = 2; break;
        case FaultSpec::Kind::DoubleSpend: need = 3; break;
        case FaultSpec::Kind::ForgeBalance:
        case FaultSpec::Kind::CrashClient:
        case FaultSpec::Kind::OmitRecordInQuery: need = 1; break;
        case FaultSpec::Kind::PartitionManager: need = 0; break;
    }
    if (fault.targets.size() < need)
        throw Error(Errc::UnknownTarget, std::string(to_string(fault.kind)) + " needs " + std::to_string(need) +
                                             " targets");
    for (std::size_t i = 0; i < need; ++i) require(fault.targets[i]);

    faults_.push_back({now_, fault});
    log_.add(now_, "sim", "fault",
             std::string(to_string(fault.kind)) + " targets=" + ids(fault.targets) + " expect=" +
                 std::string(expected_detection(fault.kind)));
    const auto& t = fault.targets;
    switch (fault.kind) {
        case FaultSpec::Kind::TamperLeaf: armed_tamper_ = fault; break;
        case FaultSpec::Kind::DoubleSpend: {
            auto saved = node(t[0]).balance_tree();
            transact(t[0], t[1], fault.amount);
            mut_node(t[0]).rewind_balance_tree(std::move(saved));
            log_.add(now_, actor(t[0]), "rewound", "mhtr=" + node(t[0]).mhtr().hex());
            transact(t[0], t[2], fault.amount);
            break;
        }
        case FaultSpec::Kind::ReplayReport: {
            auto pair = PairKey::of(t[0], t[1]);
            const auto* tree = node(t[0]).find_ptt(pair);
            if (!tree || tree->empty()) throw Error(Errc::UnknownTarget, "no report to replay on " + pair.str());
            auto seq = fault.index.value_or(tree->next_seq() - 1);
            auto it = sent_reports_.find({t[0], pair, seq});
            if (it == sent_reports_.end())
                throw Error(Errc::UnknownTarget, "no report from " + actor(t[0]) + " for seq " + std::to_string(seq));
            advance();
            Message m;
            m.kind = Message::Kind::Report;
            m.client = t[0];
            m.to = Message::Party::Integrity;
            m.report = it->second;
            send(m);
            break;
        }
        case FaultSpec::Kind::ForgeBalance: armed_forge_[t[0]] += fault.amount; break;
        case FaultSpec::Kind::CrashClient: {
            quiesce();
            advance();
            auto& n = mut_node(t[0]);
            crash_roots_[t[0]] = {n.pttrs(), n.mhtr()};
            n.wipe();
            crashed_.insert(t[0]);
            log_.add(now_, actor(t[0]), "crashed", snapshots_.count(t[0]) ? "snapshot kept" : "no snapshot");
            break;
        }
        case FaultSpec::Kind::PartitionManager:
            partition_until_ = now_ + (fault.duration > 0 ? fault.duration : 20);
            log_.add(now_, "sim", "partition", "until=" + std::to_string(partition_until_));
            break;
        case FaultSpec::Kind::OmitRecordInQuery: armed_omit_[t[0]] = fault.index.value_or(0); break;
    }
}

std::vector<std::string> Simulator::unmet_detections() const {
    std::vector<std::string> out;
    for (const auto& [at, f] : faults_) {
        bool met = false;
        const auto& t = f.targets;
        switch (f.kind) {
            case FaultSpec::Kind::TamperLeaf:
            case FaultSpec::Kind::ReplayReport: {
                auto pair = PairKey::of(t[0], t[1]);
                bool replay = f.kind == FaultSpec::Kind::ReplayReport;
                for (const auto& a : im_->alerts())
                    met = met || (a.kind == Alert::Kind::RootMismatch && a.pair == pair && a.raised_at >= at &&
                                  (a.note == "replay") == replay);
                break;
            }
            case FaultSpec::Kind::DoubleSpend:
                for (const auto& [tick, e] : manager_events_)
                    met = met || (tick >= at && e.kind == ManagerEvent::Kind::StaleProvenance &&
                                  std::count(e.subjects.begin(), e.subjects.end(), t[0]) > 0);
                break;
            case FaultSpec::Kind::ForgeBalance:
                for (const auto& [tick, e] : manager_events_)
                    met = met || (tick >= at && e.kind == ManagerEvent::Kind::ConservationViolation);
                break;
            case FaultSpec::Kind::CrashClient:
                for (const auto& e : error_log_)
                    met = met || (e.tick >= at && e.code == Errc::PeerUnreachable && e.subject == t[0]);
                break;
            case FaultSpec::Kind::PartitionManager:
                for (const auto& e : error_log_) met = met || (e.tick >= at && e.code == Errc::ManagerUnreachable);
                break;
            case FaultSpec::Kind::OmitRecordInQuery:
                for (const auto& [tick, v] : verdicts_) met = met || (tick >= at && !v.complete);
                break;
        }
        if (!met)
            out.push_back(std::string(to_string(f.kind)) + " injected at tick " + std::to_string(at) +
                          " was not detected: expected " + std::string(expected_detection(f.kind)));
    }
    if (faults_.empty()) {
        for (const auto& a : im_->alerts())
            out.push_back("unexpected " + std::string(to_string(a.kind)) + " alert on " + a.pair.str() + " seq " +
                          std::to_string(a.pair_seq));
        for (const auto& [tick, e] : manager_events_)
            if (e.kind != ManagerEvent::Kind::Settled && e.kind != ManagerEvent::Kind::Suspended)
                out.push_back("unexpected " + std::string(event_name(e.kind)) + " at tick " + std::to_string(tick));
    }
    return out;
}

std::size_t Simulator::error_count(Errc code) const {
    auto it = errors_.find(code);
    return it == errors_.end() ? 0 : it->second;
}

std::size_t Simulator::alert_count(const std::string& kind) const {
    if (kind == "any") return im_->alerts().size();
    auto it = alerts_.find(kind);
    return it == alerts_.end() ? 0 : it->second;
}

std::size_t Simulator::event_count(const std::string& kind) const {
    auto it = events_.find(kind);
    return it == events_.end() ? 0 : it->second;
}

// Grids and state ------------------------------------------------------------

MerkleHashGrid Simulator::capture(std::uint64_t epoch) {
    quiesce();
    advance();
    auto ids = clients();
    std::map<ClientId, Digest> mhtrs;
    std::map<PairKey, Digest> pttrs;
    for (auto c : ids) mhtrs[c] = node(c).mhtr();
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            auto pair = PairKey::of(ids[i], ids[j]);
            if (auto v = im_->latest_validated(pair)) pttrs[pair] = v->root;
        }
    auto grid = im_->capture_grid(epoch, ids, mhtrs, pttrs, queue_.empty());
    log_.add(now_, "im", "grid", "epoch=" + std::to_string(epoch) + " clients=" + ids_of(ids) +
                                     " hash=" + grid.grid_hash.hex());
    grids_.push_back(grid);
    return grid;
}

std::string Simulator::ids_of(const std::vector<ClientId>& v) { return ids(v); }

std::string Simulator::state_digest() const {
    std::ostringstream os;
    std::set<PairKey> pairs = registered_;
    for (auto c : clients()) pairs.insert(PairKey::of(kCurrencyManagerId, c));
    for (const auto& p : pairs) {
        os << "pair " << p.str();
        if (auto v = im_->latest_validated(p)) os << " seq=" << v->pair_seq << " root=" << v->root.hex();
        os << "\n";
    }
    for (auto c : clients()) {
        os << "client " << c << " open=" << cm_.open_balance(c) << " settled=" << cm_.settled_mhtr(c).hex();
        if (!crashed_.count(c)) os << " balance=" << node(c).balance() << " mhtr=" << node(c).mhtr().hex();
        os << "\n";
    }
    os << "issued=" << cm_.total_issued() << " redeemed=" << cm_.total_redeemed() << "\n";
    return os.str();
}

namespace {

void write_file(const std::filesystem::path& path, ByteView data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Malformed, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_file(path, ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

void Simulator::save_state(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_text(dir / "keys.txt", "scheme " + scheme_->name() + "\nintegrity-manager " +
                                     to_hex(im_->public_key()) + "\ncurrency-manager " +
                                     to_hex(bank_->public_key()) + "\n");
    write_file(dir / "client-0.snap", bank_->persist_snapshot());
    for (const auto& [id, n] : nodes_)
        if (!crashed_.count(id)) write_file(dir / ("client-" + std::to_string(id) + ".snap"), n->persist_snapshot());
    write_file(dir / "manager.tbl", cm_.table().encode());
    for (const auto& g : grids_) write_text(dir / ("grid-" + std::to_string(g.epoch) + ".txt"), g.to_text());
    std::string labels;
    for (const auto& [tick, text] : labels_) labels += std::to_string(tick) + "\t" + text + "\n";
    write_text(dir / "labels.txt", labels);

    std::string att;
    std::set<PairKey> pairs = registered_;
    for (auto c : clients()) pairs.insert(PairKey::of(kCurrencyManagerId, c));
    for (const auto& p : pairs) {
        try {
            att += "pair " + p.str() + " " + to_hex(pair_statement(p).encode()) + "\n";
        } catch (const Error&) {
        }
    }
    for (auto c : clients())
        att += "balance " + std::to_string(c) + " " +
               to_hex(attest_balance_root(cm_, *scheme_, bank_->key(), c, now_).encode()) + "\n";
    write_text(dir / "attestations.txt", att);
}

// Scenario runner ------------------------------------------------------------

namespace {

std::optional<Errc> errc_named(const std::string& name) {
    for (int i = 0; i <= static_cast<int>(Errc::UnknownTarget); ++i)
        if (to_string(static_cast<Errc>(i)) == name) return static_cast<Errc>(i);
    return std::nullopt;
}

FaultSpec fault_from(const Step& s) {
    static const std::map<std::string, FaultSpec::Kind> kinds{
        {"tamper", FaultSpec::Kind::TamperLeaf},
        {"double-spend", FaultSpec::Kind::DoubleSpend},
        {"replay", FaultSpec::Kind::ReplayReport},
        {"forge", FaultSpec::Kind::ForgeBalance},
        {"crash", FaultSpec::Kind::CrashClient},
        {"partition-manager", FaultSpec::Kind::PartitionManager},
        {"omit", FaultSpec::Kind::OmitRecordInQuery},
    };
    FaultSpec f;
    f.kind = kinds.at(s.args[0]);
    switch (f.kind) {
        case FaultSpec::Kind::TamperLeaf:
            f.targets = {s.u64(1), s.u64(2)};
            if (s.has("leaf")) f.index = s.opt_u64("leaf", 0);
            if (s.has("byte")) f.byte = s.opt_u64("byte", 0);
            break;
        case FaultSpec::Kind::DoubleSpend:
            f.targets = {s.u64(1), s.u64(2), s.u64(3)};
            f.amount = s.amount(4);
            break;
        case FaultSpec::Kind::ReplayReport:
            f.targets = {s.u64(1), s.u64(2)};
            if (s.has("seq")) f.index = s.opt_u64("seq", 0);
            break;
        case FaultSpec::Kind::ForgeBalance:
            f.targets = {s.u64(1)};
            f.amount = s.amount(2);
            break;
        case FaultSpec::Kind::CrashClient: f.targets = {s.u64(1)}; break;
        case FaultSpec::Kind::PartitionManager: f.duration = s.opt_u64("ticks", 20); break;
        case FaultSpec::Kind::OmitRecordInQuery:
            f.targets = {s.u64(1)};
            f.index = s.opt_u64("record", 0);
            break;
    }
    return f;
}

std::optional<std::string> check(Simulator& sim, const Step& s) {
    sim.quiesce();
    const auto& what = s.args[0];
    if (what == "balance") {
        auto c = s.u64(1);
        auto want = s.amount(2);
        auto local = sim.node(c).balance();
        auto open = sim.cm().open_balance(c);
        if (local != want || open != want)
            return "balance of " + std::to_string(c) + " is " + std::to_string(local) + " locally and " +
                   std::to_string(open) + " at the manager, expected " + std::to_string(want);
    } else if (what == "conservation") {
        auto v = sim.cm().check_conservation_now();
        bool want = s.args[1] == "holds";
        if (v.holds != want)
            return "conservation " + std::string(v.holds ? "holds" : "violated") + " (sum " + std::to_string(v.sum) +
                   ", expected " + std::to_string(v.expected) + ")";
    } else if (what == "alerts" || what == "events" || what == "errors") {
        std::size_t got = 0;
        if (what == "alerts") {
            got = sim.alert_count(s.args[1]);
        } else if (what == "events") {
            got = sim.event_count(s.args[1]);
        } else {
            auto code = errc_named(s.args[1]);
            if (!code) return "unknown error kind " + s.args[1];
            got = sim.error_count(*code);
        }
        if (got != s.u64(2))
            return what + " " + s.args[1] + " = " + std::to_string(got) + ", expected " + s.args[2];
    } else if (what == "verdict") {
        const auto& v = sim.last_verdict();
        if (!v) return "no verdict yet";
        auto want = [&](const char* key, bool got) -> std::optional<std::string> {
            auto o = s.opt(key);
            if (!o) return std::nullopt;
            bool w = *o == "1" || *o == "true" || *o == "yes";
            if (w != got) return std::string(key) + " is " + (got ? "true" : "false");
            return std::nullopt;
        };
        for (auto r : {want("correct", v->correct), want("complete", v->complete), want("fresh", v->fresh)})
            if (r) return r;
    } else if (what == "consistent") {
        for (auto c : sim.clients()) {
            const auto& n = sim.node(c);
            if (!n.consistent()) return "client " + std::to_string(c) + " is inconsistent";
            for (const auto& [pair, t] : n.ptts()) {
                const auto* other = sim.node(pair.other(c)).find_ptt(pair);
                if (!other || other->root() != t.root()) return "pair " + pair.str() + " roots differ";
            }
        }
    } else if (what == "recovered") {
        auto same = sim.recovered_identical(s.u64(1));
        if (!same) return "client " + s.args[1] + " has no recovery to compare";
        if (!*same) return "client " + s.args[1] + " recovered different roots";
    }
    return std::nullopt;
}

std::set<PairKey> pair_list(const std::string& text) {
    std::set<PairKey> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.insert(parse_pair(item));
    return out;
}

}  // namespace

RunResult run(const Scenario& scenario, std::optional<std::uint64_t> seed, std::size_t step_limit) {
    SimConfig cfg;
    cfg.seed = seed.value_or(scenario.seed);
    cfg.step_limit = step_limit;
    for (const auto& s : scenario.steps)
        if (s.op == "deadline") cfg.reporting_deadline = s.u64(0);

    RunResult result;
    result.sim = std::make_unique<Simulator>(cfg);
    auto& sim = *result.sim;
    for (const auto& s : scenario.steps) {
        sim.note("sim", "step", "line " + std::to_string(s.line) + ": " + s.str());
        try {
            const auto& op = s.op;
            if (op == "deadline") {
            } else if (op == "policy") {
                DeliveryPolicy p;
                if (s.args.empty()) {
                    p.delay = s.opt_real("delay", 0);
                    p.max_delay = s.opt_u64("max-delay", p.delay > 0 ? 5 : 0);
                    p.duplicate = s.opt_real("duplicate", 0);
                    p.drop = s.opt_real("drop", 0);
                }
                if (p.drop >= 1.0) throw Error(Errc::ScenarioParseError, "a drop rate of 1 never delivers");
                sim.set_policy(p);
            } else if (op == "enroll") {
                for (std::uint64_t i = 0; i < s.u64(0); ++i)
                    sim.enroll(s.has("limit") ? static_cast<Amount>(s.opt_u64("limit", 0)) : kNoLimit);
            } else if (op == "register") {
                if (s.args[0] == "all")
                    sim.register_all();
                else
                    sim.register_pair(s.u64(0), s.u64(1));
            } else if (op == "issue") {
                sim.issue(s.u64(0), s.amount(1));
            } else if (op == "redeem") {
                sim.redeem(s.u64(0), s.amount(1));
            } else if (op == "transact") {
                sim.transact(s.u64(0), s.u64(1), s.amount(2));
            } else if (op == "random") {
                sim.random_transactions(s.u64(0), static_cast<Amount>(s.opt_u64("min", 1)),
                                        static_cast<Amount>(s.opt_u64("max", 50)));
            } else if (op == "tick") {
                sim.advance(s.u64(0));
            } else if (op == "quiesce") {
                sim.quiesce();
            } else if (op == "capture") {
                sim.capture(s.u64(0));
            } else if (op == "persist") {
                sim.persist(s.u64(0));
            } else if (op == "recover") {
                sim.recover(s.u64(0));
            } else if (op == "recover-balance") {
                sim.recover_balance(s.u64(0));
            } else if (op == "reset-epoch") {
                sim.reset_epoch(s.u64(0), s.u64(1));
            } else if (op == "repair") {
                sim.repair(s.u64(0), s.u64(1), s.u64(2));
            } else if (op == "suspend") {
                sim.suspend(s.u64(0));
            } else if (op == "reinstate") {
                sim.reinstate(s.u64(0));
            } else if (op == "label") {
                sim.label(s.u64(0), s.args[1]);
            } else if (op == "authorize") {
                sim.authorize(s.u64(0), s.u64(1), pair_list(s.opt("pairs").value_or("")), s.has("balances"));
            } else if (op == "query") {
                if (auto p = s.opt("pair"))
                    sim.query_pair(s.u64(0), s.u64(1), parse_pair(*p), s.opt_u64("from", 1),
                                   s.opt_u64("to", ~std::uint64_t{0}));
                else
                    sim.query_balances(s.u64(0), s.u64(1), {s.opt_u64("from", 0), 0},
                                       {s.opt_u64("to", ~std::uint64_t{0}), ~std::uint64_t{0}});
            } else if (op == "fault") {
                sim.inject(fault_from(s));
            } else if (op == "expect") {
                if (auto failure = check(sim, s)) {
                    auto msg = "line " + std::to_string(s.line) + ": " + *failure;
                    sim.note("sim", "assert-fail", msg);
                    result.failures.push_back(msg);
                } else {
                    sim.note("sim", "assert-pass", s.str());
                }
            }
        } catch (const Error& e) {
            if (e.code() == Errc::UnknownTarget || e.code() == Errc::StepLimitExceeded ||
                e.code() == Errc::ScenarioParseError)
                throw;
            sim.note("sim", "error", e.what());
        }
    }
    sim.quiesce();
    for (auto& u : sim.unmet_detections()) {
        sim.note("sim", "undetected", u);
        result.failures.push_back(std::move(u));
    }
    sim.note("sim", "end", "failures=" + std::to_string(result.failures.size()));
    result.log = sim.log();
    return result;
}

}  // namespace dmoney
