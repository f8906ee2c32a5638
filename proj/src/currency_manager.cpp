#include "dmoney/currency_manager.hpp"

#include <algorithm>
#include <sstream>

namespace dmoney {

// ---------------------------------------------------------------------------
// TemporalBalanceTable

void TemporalBalanceTable::close(ClientId client, std::uint64_t close_stamp, Tick at) {
    auto it = intervals_.find(client);
    if (it == intervals_.end() || it->second.empty() || it->second.back().to != kForever) return;
    auto& iv = it->second.back();
    iv.to = at;
    versions_.push_back(TemporalRow{close_stamp, client, iv.balance, iv.from, at, iv.provenance, "Updated Record"});
}

void TemporalBalanceTable::open(ClientId client, std::uint64_t open_stamp, Amount balance, Tick from,
                                const Digest& provenance) {
    auto& list = intervals_[client];
    const char* remark = list.empty() ? "Initial Balance" : "Updated Balance";
    list.push_back(Interval{from, kForever, balance, provenance, versions_.size()});
    versions_.push_back(TemporalRow{open_stamp, client, balance, from, kForever, provenance, remark});
}

namespace {
constexpr std::uint32_t kTableMagic = 0x4454424c;  // "DTBL"
constexpr std::uint32_t kTableVersion = 1;
}  // namespace

Bytes TemporalBalanceTable::encode() const {
    Encoder e;
    e.u32(kTableMagic).u32(kTableVersion).u64(versions_.size());
    for (const auto& r : versions_) {
        e.u64(r.txn_stamp).u64(r.client).i64(r.balance).u64(r.valid_from).u64(r.valid_to).digest(r.provenance);
        e.blob(ByteView(reinterpret_cast<const std::uint8_t*>(r.remarks.data()), r.remarks.size()));
    }
    return std::move(e).bytes();
}

TemporalBalanceTable TemporalBalanceTable::decode(ByteView in) {
    Decoder d(in);
    if (d.u32() != kTableMagic || d.u32() != kTableVersion) throw Error(Errc::Malformed, "not a balance table");
    TemporalBalanceTable t;
    for (auto n = d.u64(); n > 0; --n) {
        TemporalRow r;
        r.txn_stamp = d.u64();
        r.client = d.u64();
        r.balance = d.i64();
        r.valid_from = d.u64();
        r.valid_to = d.u64();
        r.provenance = d.digest();
        auto remarks = d.blob();
        r.remarks.assign(remarks.begin(), remarks.end());
        auto before = t.versions_.size();
        if (r.valid_to == kForever)
            t.open(r.client, r.txn_stamp, r.balance, r.valid_from, r.provenance);
        else
            t.close(r.client, r.txn_stamp, r.valid_to);
        if (t.versions_.size() != before + 1 || t.versions_.back().balance != r.balance)
            throw Error(Errc::Malformed, "balance table rows do not replay");
        t.versions_.back().remarks = std::move(r.remarks);
    }
    d.expect_done();
    return t;
}

const TemporalBalanceTable::Interval* TemporalBalanceTable::open_interval(ClientId client) const {
    auto it = intervals_.find(client);
    if (it == intervals_.end() || it->second.empty() || it->second.back().to != kForever) return nullptr;
    return &it->second.back();
}

Amount TemporalBalanceTable::balance_at(ClientId client, Tick at) const {
    auto it = intervals_.find(client);
    if (it == intervals_.end()) return 0;
    const auto& list = it->second;
    for (auto iv = list.rbegin(); iv != list.rend(); ++iv)
        if (iv->from <= at && at < iv->to) return iv->balance;
    return 0;
}

Amount TemporalBalanceTable::sum_at(Tick at) const {
    Amount sum = 0;
    for (const auto& [client, list] : intervals_) sum += balance_at(client, at);
    return sum;
}

Amount TemporalBalanceTable::sum_open() const {
    Amount sum = 0;
    for (const auto& [client, list] : intervals_)
        if (const auto* iv = open_interval(client)) sum += iv->balance;
    return sum;
}

std::vector<ClientId> TemporalBalanceTable::clients() const {
    std::vector<ClientId> out;
    for (const auto& [client, list] : intervals_) out.push_back(client);
    return out;
}

const std::vector<TemporalBalanceTable::Interval>& TemporalBalanceTable::intervals(ClientId client) const {
    static const std::vector<Interval> kNone;
    auto it = intervals_.find(client);
    return it == intervals_.end() ? kNone : it->second;
}

void TemporalBalanceTable::annotate(std::size_t version, const std::string& note) {
    auto& r = versions_.at(version);
    r.remarks += r.remarks.empty() ? note : "; " + note;
}

std::string TemporalBalanceTable::export_delimited(char sep, const TickLabel& label) const {
    auto show = [&](Tick t) -> std::string {
        if (t == kForever) return "inf";
        return label ? label(t) : std::to_string(t);
    };
    std::ostringstream out;
    out << "Transaction Time-stamp" << sep << "Client ID" << sep << "Valid Balance" << sep << "Valid From" << sep
        << "Valid To" << sep << "Remarks" << sep << "Provenance Root\n";
    for (const auto& r : versions_) {
        out << 'T' << r.txn_stamp << sep << r.client << sep << r.balance << sep << show(r.valid_from) << sep
            << show(r.valid_to) << sep << r.remarks << sep << r.provenance.hex() << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Registry

ClientId CurrencyManager::enroll(PublicKey key, Amount limit, std::string zone) {
    ClientId id = next_id_++;
    registry_.emplace(id, ClientEntry{std::move(key), ClientStatus::Active, limit, std::move(zone)});
    order_.push_back(id);
    chain(id);
    return id;
}

bool CurrencyManager::is_enrolled(ClientId id) const {
    auto it = registry_.find(id);
    return it != registry_.end() && it->second.status != ClientStatus::Disenrolled;
}

ClientEntry& CurrencyManager::entry(ClientId id) {
    auto it = registry_.find(id);
    if (it == registry_.end() || it->second.status == ClientStatus::Disenrolled)
        throw Error(Errc::UnknownClient, std::to_string(id));
    return it->second;
}

const ClientEntry& CurrencyManager::client(ClientId id) const {
    return const_cast<CurrencyManager*>(this)->entry(id);
}

CurrencyManager::Chain& CurrencyManager::chain(ClientId id) {
    auto [it, fresh] = chains_.try_emplace(id);
    if (fresh) it->second.head = hasher_.marker(tag::kEmptyBalanceTree);
    return it->second;
}

PairRegistration CurrencyManager::register_pair(ClientId a, ClientId b, bool consent_a, bool consent_b) {
    if (a == b) throw Error(Errc::NotRegisteredPeers, "a client cannot pair with itself");
    auto& ea = entry(a);
    auto& eb = entry(b);
    if (ea.status != ClientStatus::Active) throw Error(Errc::ClientSuspended, std::to_string(a));
    if (eb.status != ClientStatus::Active) throw Error(Errc::ClientSuspended, std::to_string(b));
    auto key = PairKey::of(a, b);
    auto& reg = pairs_[key];
    reg.key = key;
    bool a_is_lo = a == key.lo;
    reg.consent_lo |= a_is_lo ? consent_a : consent_b;
    reg.consent_hi |= a_is_lo ? consent_b : consent_a;
    reg.state = reg.consent_lo && reg.consent_hi ? PairState::Active : PairState::Pending;
    return reg;
}

bool CurrencyManager::pair_active(ClientId a, ClientId b) const {
    auto active = [&](ClientId id) {
        auto it = registry_.find(id);
        return it != registry_.end() && it->second.status == ClientStatus::Active;
    };
    if (a == kCurrencyManagerId) return active(b);
    if (b == kCurrencyManagerId) return active(a);
    auto it = pairs_.find(PairKey::of(a, b));
    return it != pairs_.end() && it->second.state == PairState::Active && active(a) && active(b);
}

void CurrencyManager::suspend(ClientId client, const std::string& cause) {
    auto& e = entry(client);
    if (e.status == ClientStatus::Suspended) return;
    e.status = ClientStatus::Suspended;
    events_.push_back({ManagerEvent::Kind::Suspended, {client}, {}, 0, 0, cause});
}

void CurrencyManager::reinstate(ClientId client) { entry(client).status = ClientStatus::Active; }

void CurrencyManager::disenroll(ClientId client) { entry(client).status = ClientStatus::Disenrolled; }

// ---------------------------------------------------------------------------
// Chains and settlement

bool CurrencyManager::accept_link(const Link& link, ReportOutcome& out) {
    const auto& leg = link.leg;
    auto& c = chain(leg.client);
    auto key = std::make_pair(leg.pair(), leg.pair_seq);
    if (auto seen = c.seen.find(key); seen != c.seen.end() && seen->second == leg) {
        out.kind = ReportOutcome::Kind::Duplicate;
        return false;
    }
    if (c.used_priors.count(leg.prior_mhtr)) {
        out.kind = ReportOutcome::Kind::StaleProvenance;
        events_.push_back({ManagerEvent::Kind::StaleProvenance, {leg.client}, leg.pair(), leg.pair_seq, 0,
                           "prior MHTR " + leg.prior_mhtr.hex().substr(0, 16) + " already consumed"});
        return false;
    }
    c.used_priors.insert(leg.prior_mhtr);
    c.seen.emplace(key, leg);
    c.pending.emplace(leg.prior_mhtr, link);
    out.kind = ReportOutcome::Kind::Pending;
    return true;
}

std::size_t CurrencyManager::settle_ready() {
    std::size_t settled = 0;
    bool progress = true;
    while (progress) {
        progress = false;
        for (auto& [id, c] : chains_) {
            if (try_settle(id)) {
                progress = true;
                ++settled;
            }
        }
    }
    return settled;
}

bool CurrencyManager::try_settle(ClientId client) {
    auto& c = chain(client);
    auto it = c.pending.find(c.head);
    if (it == c.pending.end()) return false;
    Link link = it->second;
    if (link.with_manager) {
        c.pending.erase(it);
        settle_single(link);
        return true;
    }
    auto& pc = chain(link.leg.peer);
    auto pit = pc.pending.find(pc.head);
    if (pit == pc.pending.end()) return false;
    const Link& other = pit->second;
    if (other.leg.peer != client || other.leg.pair_seq != link.leg.pair_seq) return false;
    Link counterpart = other;
    c.pending.erase(it);
    pc.pending.erase(pit);

    const auto& a = link.leg;
    const auto& b = counterpart.leg;
    std::string problem;
    if (a.delta != -b.delta || a.delta == 0) problem = "amounts disagree";
    else if (a.timestamp != b.timestamp) problem = "timestamps disagree";
    else if (a.peer_provenance != b.prior_mhtr || b.peer_provenance != a.prior_mhtr)
        problem = "peer provenance does not match counterpart's prior root";
    if (!problem.empty()) {
        events_.push_back({ManagerEvent::Kind::LegMismatch, {a.client, b.client}, a.pair(), a.pair_seq, 0, problem});
        if (auto_suspend_) {
            suspend(a.client, "leg mismatch");
            suspend(b.client, "leg mismatch");
        }
        return true;
    }
    settle_pair(link, counterpart);
    return true;
}

void CurrencyManager::settle_single(const Link& link) {
    BalanceLeg leg = link.leg;
    const auto* open = table_.open_interval(leg.client);
    Amount prior = open ? open->balance : 0;
    leg.new_balance = prior + leg.delta;

    std::vector<std::size_t> versions;
    if (open) {
        table_.close(leg.client, next_stamp_++, leg.timestamp);
        versions.push_back(table_.versions().size() - 1);
    }
    table_.open(leg.client, next_stamp_++, leg.new_balance, leg.timestamp, leg.new_mhtr);
    versions.push_back(table_.versions().size() - 1);
    chain(leg.client).head = leg.new_mhtr;

    if (leg.delta > 0)
        issued_ += leg.delta;
    else
        redeemed_ += -leg.delta;
    supply_changes_.emplace_back(leg.timestamp, leg.delta);

    SettledTransfer s;
    s.payer = leg.delta > 0 ? kCurrencyManagerId : leg.client;
    s.payee = leg.delta > 0 ? leg.client : kCurrencyManagerId;
    s.amount = leg.delta > 0 ? leg.delta : -leg.delta;
    s.timestamp = leg.timestamp;
    s.versions = std::move(versions);
    settled_[{leg.pair(), leg.pair_seq}] = std::move(s);
    events_.push_back({ManagerEvent::Kind::Settled, {leg.client}, leg.pair(), leg.pair_seq, 0, {}});
    after_settlement({leg.client}, leg.pair(), leg.pair_seq);
}

void CurrencyManager::settle_pair(const Link& a, const Link& b) {
    const BalanceLeg& payer = a.leg.delta < 0 ? a.leg : b.leg;
    const BalanceLeg& payee = a.leg.delta < 0 ? b.leg : a.leg;

    std::vector<const BalanceLeg*> legs{&payer, &payee};
    if (payee.client < payer.client) std::swap(legs[0], legs[1]);

    std::vector<std::size_t> versions;
    std::uint64_t close_stamp = next_stamp_++;
    for (const auto* leg : legs) {
        if (table_.open_interval(leg->client)) {
            table_.close(leg->client, close_stamp, leg->timestamp);
            versions.push_back(table_.versions().size() - 1);
        }
    }
    std::uint64_t open_stamp = next_stamp_++;
    for (const auto* leg : legs) {
        table_.open(leg->client, open_stamp, leg->new_balance, leg->timestamp, leg->new_mhtr);
        versions.push_back(table_.versions().size() - 1);
        chain(leg->client).head = leg->new_mhtr;
    }
    record_settlement(payer, payee, std::move(versions));
    events_.push_back({ManagerEvent::Kind::Settled, {payer.client, payee.client}, payer.pair(), payer.pair_seq, 0, {}});
    after_settlement({payer.client, payee.client}, payer.pair(), payer.pair_seq);
}

void CurrencyManager::record_settlement(const BalanceLeg& payer, const BalanceLeg& payee,
                                        std::vector<std::size_t> versions) {
    SettledTransfer s{payer.client, payee.client, payee.delta, payer.timestamp, std::move(versions)};
    auto pair = payer.pair();

    auto rep = reparations_.find(pair);
    if (rep != reparations_.end()) {
        auto& list = rep->second;
        auto match = std::find_if(list.begin(), list.end(), [&](const ReparationRecord& r) {
            return r.payer == s.payer && r.payee == s.payee && r.amount == s.amount;
        });
        if (match != list.end()) {
            std::string note = "reparation of " + pair.str() + "#" + std::to_string(match->original_seq);
            for (auto v : s.versions) table_.annotate(v, note);
            auto orig = settled_.find({pair, match->original_seq});
            if (orig != settled_.end())
                for (auto v : orig->second.versions)
                    table_.annotate(v, "reversed by " + pair.str() + "#" + std::to_string(payer.pair_seq));
            list.erase(match);
        }
    }
    settled_[{pair, payer.pair_seq}] = std::move(s);
}

void CurrencyManager::after_settlement(const std::vector<ClientId>& subjects, PairKey pair, std::uint64_t seq) {
    auto verdict = check_conservation_now();
    if (verdict.holds) return;
    events_.push_back({ManagerEvent::Kind::ConservationViolation, subjects, pair, seq, verdict.discrepancy(),
                       "open balances " + std::to_string(verdict.sum) + " vs supply " +
                           std::to_string(verdict.expected)});
    if (auto_suspend_)
        for (auto c : subjects) suspend(c, "conservation violation");
}

// ---------------------------------------------------------------------------
// Supply and reporting

IssuanceReceipt CurrencyManager::issue(ClientId client, Amount amount, Tick timestamp, const ClientLink& link) {
    auto& e = entry(client);
    if (e.status != ClientStatus::Active) throw Error(Errc::ClientSuspended, std::to_string(client));
    if (amount <= 0) throw Error(Errc::NonPositiveAmount, std::to_string(amount));
    Link l;
    l.with_manager = true;
    l.leg = BalanceLeg{client, kCurrencyManagerId, link.pair_seq, timestamp, amount, 0,
                       link.prior_mhtr, link.new_mhtr, hasher_.marker(tag::kEmptyBalanceTree)};
    ReportOutcome out;
    if (!accept_link(l, out)) {
        if (out.kind == ReportOutcome::Kind::StaleProvenance)
            throw Error(Errc::StaleProvenance, "issuance to " + std::to_string(client));
    }
    settle_ready();
    return {client, amount, link.pair_seq, settled_.count({l.leg.pair(), link.pair_seq}) > 0};
}

RedemptionReceipt CurrencyManager::redeem(ClientId client, Amount amount, Tick timestamp, const ClientLink& link) {
    entry(client);
    if (amount <= 0) throw Error(Errc::NonPositiveAmount, std::to_string(amount));
    if (pending_legs(client) > 0) throw Error(Errc::PendingSettlement, std::to_string(client));
    if (amount > open_balance(client))
        throw Error(Errc::InsufficientBalance,
                    std::to_string(amount) + " > open balance " + std::to_string(open_balance(client)));
    if (link.prior_mhtr != chain(client).head)
        throw Error(Errc::StaleProvenance, "redemption prior root is not the settled root");
    Link l;
    l.with_manager = true;
    l.leg = BalanceLeg{client, kCurrencyManagerId, link.pair_seq, timestamp, -amount, 0,
                       link.prior_mhtr, link.new_mhtr, hasher_.marker(tag::kEmptyBalanceTree)};
    ReportOutcome out;
    if (!accept_link(l, out) && out.kind == ReportOutcome::Kind::StaleProvenance)
        throw Error(Errc::StaleProvenance, "redemption by " + std::to_string(client));
    settle_ready();
    return {client, amount, link.pair_seq, settled_.count({l.leg.pair(), link.pair_seq}) > 0};
}

ReportOutcome CurrencyManager::report_balance(const BalanceLeg& leg) {
    entry(leg.client);
    if (leg.peer == kCurrencyManagerId)
        throw Error(Errc::NotRegisteredPeers, "manager legs are settled through issue/redeem");
    if (registry_.find(leg.peer) == registry_.end()) throw Error(Errc::UnknownClient, std::to_string(leg.peer));
    ReportOutcome out;
    if (!accept_link(Link{leg, false}, out)) return out;
    settle_ready();
    if (settled_.count({leg.pair(), leg.pair_seq})) out.kind = ReportOutcome::Kind::Settled;
    return out;
}

ConservationVerdict CurrencyManager::check_conservation(Tick at) const {
    ConservationVerdict v;
    for (const auto& [tick, delta] : supply_changes_)
        if (tick <= at) v.expected += delta;
    v.sum = table_.sum_at(at);
    v.holds = v.sum == v.expected;
    return v;
}

ReparationRecord CurrencyManager::repair(PairKey pair, std::uint64_t pair_seq) {
    auto it = settled_.find({pair, pair_seq});
    if (it == settled_.end())
        throw Error(Errc::UnknownTransaction, pair.str() + "#" + std::to_string(pair_seq));
    const auto& s = it->second;
    ReparationRecord r{pair, pair_seq, s.payee, s.payer, s.amount};
    for (auto v : s.versions) table_.annotate(v, "reversal ordered");
    reparations_[pair].push_back(r);
    return r;
}

Amount CurrencyManager::open_balance(ClientId client) const {
    const auto* iv = table_.open_interval(client);
    return iv ? iv->balance : 0;
}

Digest CurrencyManager::settled_mhtr(ClientId client) const {
    auto it = chains_.find(client);
    return it == chains_.end() ? hasher_.marker(tag::kEmptyBalanceTree) : it->second.head;
}

std::size_t CurrencyManager::pending_legs(ClientId client) const {
    auto it = chains_.find(client);
    return it == chains_.end() ? 0 : it->second.pending.size();
}

std::size_t CurrencyManager::pending_legs() const {
    std::size_t n = 0;
    for (const auto& [id, c] : chains_) n += c.pending.size();
    return n;
}

std::vector<ManagerEvent> CurrencyManager::drain_events() {
    std::vector<ManagerEvent> out;
    out.swap(events_);
    return out;
}

}  // namespace dmoney
