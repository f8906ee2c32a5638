#include "dmoney/integrity_manager.hpp"

#include <algorithm>
#include <sstream>

namespace dmoney {

std::string_view to_string(Alert::Kind kind) noexcept {
    switch (kind) {
        case Alert::Kind::RootMismatch: return "RootMismatch";
        case Alert::Kind::MissingCounterpartReport: return "MissingCounterpartReport";
        case Alert::Kind::BalanceCrossCheckFailure: return "BalanceCrossCheckFailure";
        case Alert::Kind::StaleProvenance: return "StaleProvenance";
        case Alert::Kind::ConservationViolation: return "ConservationViolation";
        case Alert::Kind::GridMismatch: return "GridMismatch";
    }
    return "Unknown";
}

// ---------------------------------------------------------------------------
// Grid

std::vector<std::vector<Digest>> grid_cells(const std::vector<ClientId>& clients,
                                            const std::map<ClientId, Digest>& mhtrs,
                                            const std::map<PairKey, Digest>& pttrs, const Hasher& hasher) {
    const Digest empty = hasher.marker(tag::kEmptyGridCell);
    const std::size_t n = clients.size();
    std::vector<std::vector<Digest>> cells(n, std::vector<Digest>(n, empty));
    for (std::size_t i = 0; i < n; ++i) {
        auto m = mhtrs.find(clients[i]);
        cells[i][i] = m != mhtrs.end() ? m->second : hasher.marker(tag::kEmptyBalanceTree);
        for (std::size_t j = i + 1; j < n; ++j) {
            auto p = pttrs.find(PairKey::of(clients[i], clients[j]));
            if (p != pttrs.end()) cells[i][j] = p->second;
        }
    }
    return cells;
}

namespace {

Digest hash_concat(const Hasher& hasher, const std::vector<Digest>& parts) {
    Bytes buf;
    buf.reserve(parts.size() * 32);
    for (const auto& d : parts) buf.insert(buf.end(), d.bytes.begin(), d.bytes.end());
    return hasher.raw(buf);
}

void line_hashes(const std::vector<std::vector<Digest>>& cells, const Hasher& hasher, std::vector<Digest>& rows,
                 std::vector<Digest>& cols) {
    const std::size_t n = cells.size();
    rows.assign(n, {});
    cols.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Digest> col(n);
        for (std::size_t r = 0; r < n; ++r) col[r] = cells[r][i];
        rows[i] = hash_concat(hasher, cells[i]);
        cols[i] = hash_concat(hasher, col);
    }
}

Digest grid_digest(const Hasher& hasher, const std::vector<Digest>& rows, const std::vector<Digest>& cols) {
    std::vector<Digest> all(rows);
    all.insert(all.end(), cols.begin(), cols.end());
    return hash_concat(hasher, all);
}

}  // namespace

void hash_grid(MerkleHashGrid& grid, const Hasher& hasher) {
    line_hashes(grid.cells, hasher, grid.row_hashes, grid.column_hashes);
    grid.grid_hash = grid_digest(hasher, grid.row_hashes, grid.column_hashes);
}

std::string MerkleHashGrid::to_text(const Hasher& hasher) const {
    const Digest empty = hasher.marker(tag::kEmptyGridCell);
    std::ostringstream out;
    out << "merkle-hash-grid v1\n";
    out << "epoch " << epoch << '\n';
    out << "clients";
    for (auto c : clients) out << ' ' << c;
    out << '\n';
    for (std::size_t i = 0; i < cells.size(); ++i) {
        out << "row " << clients[i];
        for (const auto& d : cells[i]) out << ' ' << (d == empty ? std::string("-") : d.hex());
        out << '\n';
    }
    for (std::size_t i = 0; i < row_hashes.size(); ++i) out << "row-hash " << clients[i] << ' ' << row_hashes[i].hex() << '\n';
    for (std::size_t i = 0; i < column_hashes.size(); ++i)
        out << "column-hash " << clients[i] << ' ' << column_hashes[i].hex() << '\n';
    out << "grid-hash " << grid_hash.hex() << '\n';
    out << "signature " << signature.signer << ' ' << to_hex(signature.bytes) << '\n';
    return out.str();
}

MerkleHashGrid MerkleHashGrid::from_text(const std::string& text, const Hasher& hasher) {
    const Digest empty = hasher.marker(tag::kEmptyGridCell);
    MerkleHashGrid g;
    std::istringstream in(text);
    std::string line;
    auto bad = [](const std::string& why) { return Error(Errc::Malformed, "grid text: " + why); };
    if (!std::getline(in, line) || line != "merkle-hash-grid v1") throw bad("missing header");
    bool have_hash = false, have_sig = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "epoch") {
            if (!(ls >> g.epoch)) throw bad("epoch");
        } else if (word == "clients") {
            for (ClientId c; ls >> c;) g.clients.push_back(c);
        } else if (word == "row") {
            ClientId c;
            if (!(ls >> c) || g.cells.size() >= g.clients.size() || g.clients[g.cells.size()] != c) throw bad("row order");
            std::vector<Digest> row;
            for (std::string cell; ls >> cell;) row.push_back(cell == "-" ? empty : Digest::from_hex(cell));
            if (row.size() != g.clients.size()) throw bad("row width");
            g.cells.push_back(std::move(row));
        } else if (word == "row-hash" || word == "column-hash") {
            ClientId c;
            std::string hex;
            if (!(ls >> c >> hex)) throw bad(word);
            auto& list = word == "row-hash" ? g.row_hashes : g.column_hashes;
            if (list.size() >= g.clients.size() || g.clients[list.size()] != c) throw bad(word + " order");
            list.push_back(Digest::from_hex(hex));
        } else if (word == "grid-hash") {
            std::string hex;
            if (!(ls >> hex)) throw bad("grid-hash");
            g.grid_hash = Digest::from_hex(hex);
            have_hash = true;
        } else if (word == "signature") {
            std::string hex;
            if (!(ls >> g.signature.signer >> hex)) throw bad("signature");
            g.signature.bytes = dmoney::from_hex(hex);
            have_sig = true;
        } else {
            throw bad("unknown line '" + word + "'");
        }
    }
    const auto n = g.clients.size();
    if (g.cells.size() != n || g.row_hashes.size() != n || g.column_hashes.size() != n || !have_hash || !have_sig)
        throw bad("incomplete grid");
    return g;
}

// ---------------------------------------------------------------------------
// IntegrityManager

IntegrityManager::IntegrityManager(const SignatureScheme& scheme, KeyHandle key, Config config, Hasher hasher)
    : scheme_(scheme), key_(key), config_(config), hasher_(std::move(hasher)) {
    clients_.insert(kCurrencyManagerId);
}

void IntegrityManager::admit_client(ClientId id) {
    clients_.insert(id);
    pairs_.insert(PairKey::of(kCurrencyManagerId, id));
}

void IntegrityManager::admit_pair(PairKey pair) { pairs_.insert(pair); }

ValidationOutcome IntegrityManager::raise(Alert alert) {
    alerts_.push_back(alert);
    return {ValidationOutcome::Kind::Alerted, std::move(alert)};
}

ValidationOutcome IntegrityManager::compare(const TransactionReport& a, const TransactionReport& b, Tick now) {
    SeqKey key{a.pair, a.pair_seq};
    resolved_[key] = {a.reporter, b.reporter};
    if (a.pttr == b.pttr) {
        validated_[a.pair][a.pair_seq] = a.pttr;
        ++validated_total_;
        store_record(a.pair, a.pair_seq, a.record_digest);
        return {ValidationOutcome::Kind::Validated, std::nullopt};
    }
    Alert alert;
    alert.kind = Alert::Kind::RootMismatch;
    alert.subjects = {a.pair.lo, a.pair.hi};
    alert.pair = a.pair;
    alert.pair_seq = a.pair_seq;
    const auto& lo = a.reporter == a.pair.lo ? a : b;
    const auto& hi = a.reporter == a.pair.lo ? b : a;
    alert.digests = {lo.pttr, hi.pttr};
    alert.note = "roots differ";
    alert.raised_at = now;
    return raise(std::move(alert));
}

ValidationOutcome IntegrityManager::ingest_report(const TransactionReport& r, Tick now) {
    if (!clients_.count(r.reporter)) throw Error(Errc::UnknownReporter, std::to_string(r.reporter));
    if (!r.pair.contains(r.reporter) || !pairs_.count(r.pair))
        throw Error(Errc::UnregisteredPair, r.pair.str() + " from " + std::to_string(r.reporter));

    SeqKey key{r.pair, r.pair_seq};
    auto replay = [&](std::vector<Digest> digests) {
        Alert alert;
        alert.kind = Alert::Kind::RootMismatch;
        alert.subjects = {r.reporter};
        alert.pair = r.pair;
        alert.pair_seq = r.pair_seq;
        alert.digests = std::move(digests);
        alert.note = "replay";
        alert.raised_at = now;
        return raise(std::move(alert));
    };

    if (resolved_.count(key)) {
        std::vector<Digest> digests{r.pttr};
        if (auto v = validated_root(r.pair, r.pair_seq)) digests.push_back(*v);
        return replay(std::move(digests));
    }
    if (auto it = pending_.find(key); it != pending_.end()) {
        if (it->second.report.reporter == r.reporter) return replay({r.pttr, it->second.report.pttr});
        TransactionReport first = it->second.report;
        pending_.erase(it);
        return compare(first, r, now);
    }
    if (auto it = expired_.find(key); it != expired_.end()) {
        if (it->second.reporter == r.reporter) return replay({r.pttr, it->second.pttr});
        TransactionReport first = it->second;
        expired_.erase(it);
        return compare(first, r, now);
    }
    pending_.emplace(key, Pending{r, now + config_.reporting_deadline});
    return {};
}

std::vector<Alert> IntegrityManager::expire(Tick now) {
    std::vector<Alert> out;
    for (auto it = pending_.begin(); it != pending_.end();) {
        if (now <= it->second.deadline) {
            ++it;
            continue;
        }
        const auto& r = it->second.report;
        Alert alert;
        alert.kind = Alert::Kind::MissingCounterpartReport;
        alert.subjects = {r.pair.other(r.reporter)};
        alert.pair = r.pair;
        alert.pair_seq = r.pair_seq;
        alert.digests = {r.pttr};
        alert.note = "no report from " + std::to_string(r.pair.other(r.reporter)) + " by tick " +
                     std::to_string(it->second.deadline);
        alert.raised_at = now;
        alerts_.push_back(alert);
        out.push_back(std::move(alert));
        expired_.emplace(it->first, r);
        it = pending_.erase(it);
    }
    return out;
}

ValidationOutcome IntegrityManager::cross_check_balance(ClientId client, const Digest& from_client,
                                                        const Digest& from_manager, Tick now, Tick grace) {
    if (from_client == from_manager) {
        cross_checks_.erase(client);
        return {ValidationOutcome::Kind::Validated, std::nullopt};
    }
    auto [it, fresh] = cross_checks_.try_emplace(client, CrossCheck{now});
    if (now - it->second.first_seen < grace) return {};
    cross_checks_.erase(it);
    Alert alert;
    alert.kind = Alert::Kind::BalanceCrossCheckFailure;
    alert.subjects = {client};
    alert.digests = {from_client, from_manager};
    alert.note = "client and manager disagree on the balance root";
    alert.raised_at = now;
    return raise(std::move(alert));
}

MerkleHashGrid IntegrityManager::capture_grid(std::uint64_t epoch, const std::vector<ClientId>& clients,
                                              const std::map<ClientId, Digest>& mhtrs,
                                              const std::map<PairKey, Digest>& pttrs, bool quiescent) const {
    if (!quiescent) throw Error(Errc::NotQuiescent, "commits in flight");
    if (clients.empty()) throw Error(Errc::EmptyGrid, "no clients");
    MerkleHashGrid g;
    g.epoch = epoch;
    g.clients = clients;
    g.cells = grid_cells(clients, mhtrs, pttrs, hasher_);
    hash_grid(g, hasher_);
    g.signature = sign_root(scheme_, g.grid_hash, key_);
    return g;
}

GridVerdict IntegrityManager::verify_grid(const MerkleHashGrid& grid, const std::map<ClientId, Digest>& mhtrs,
                                          const std::map<PairKey, Digest>& pttrs) const {
    return verify_grid(scheme_, public_key(), grid, mhtrs, pttrs, hasher_);
}

GridVerdict IntegrityManager::verify_grid(const SignatureScheme& scheme, const PublicKey& key,
                                          const MerkleHashGrid& grid, const std::map<ClientId, Digest>& mhtrs,
                                          const std::map<PairKey, Digest>& pttrs, const Hasher& hasher) {
    const auto n = grid.clients.size();
    if (grid.row_hashes.size() != n || grid.column_hashes.size() != n)
        throw Error(Errc::Malformed, "grid hash lists do not match client count");
    if (grid_digest(hasher, grid.row_hashes, grid.column_hashes) != grid.grid_hash ||
        !verify_root(scheme, grid.grid_hash, grid.signature, key))
        throw Error(Errc::BadSignature, "grid signature does not cover its hashes");

    std::vector<Digest> rows, cols;
    line_hashes(grid_cells(grid.clients, mhtrs, pttrs, hasher), hasher, rows, cols);
    // Cells carried in the grid must also reproduce the signed line hashes.
    std::vector<Digest> stored_rows = rows, stored_cols = cols;
    if (grid.cells.size() == n) line_hashes(grid.cells, hasher, stored_rows, stored_cols);
    GridVerdict v;
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i] != grid.row_hashes[i] || stored_rows[i] != grid.row_hashes[i]) v.rows.push_back(i);
        if (cols[i] != grid.column_hashes[i] || stored_cols[i] != grid.column_hashes[i]) v.columns.push_back(i);
    }
    for (auto r : v.rows)
        for (auto c : v.columns) v.cells.emplace_back(r, c);
    v.matches = v.rows.empty() && v.columns.empty();
    return v;
}

std::optional<IntegrityManager::ValidatedRoot> IntegrityManager::latest_validated(PairKey pair) const {
    auto it = validated_.find(pair);
    if (it == validated_.end() || it->second.empty()) return std::nullopt;
    const auto& [seq, root] = *it->second.rbegin();
    return ValidatedRoot{seq, root};
}

std::optional<Digest> IntegrityManager::validated_root(PairKey pair, std::uint64_t pair_seq) const {
    auto it = validated_.find(pair);
    if (it == validated_.end()) return std::nullopt;
    auto s = it->second.find(pair_seq);
    if (s == it->second.end()) return std::nullopt;
    return s->second;
}

bool IntegrityManager::is_validated(PairKey pair, std::uint64_t pair_seq) const {
    return validated_root(pair, pair_seq).has_value();
}

void IntegrityManager::archive(PairKey pair, std::uint64_t epoch) {
    if (auto v = latest_validated(pair)) archived_[pair][epoch] = v->root;
}

std::optional<Digest> IntegrityManager::archived_root(PairKey pair, std::uint64_t epoch) const {
    auto it = archived_.find(pair);
    if (it == archived_.end()) return std::nullopt;
    auto e = it->second.find(epoch);
    if (e == it->second.end()) return std::nullopt;
    return e->second;
}

void IntegrityManager::store_record(PairKey pair, std::uint64_t pair_seq, const Digest& record_digest,
                                    std::optional<Bytes> full_record) {
    auto& slot = records_[{pair, pair_seq}];
    slot.digest = record_digest;
    if (config_.keep_full_records && full_record) slot.body = std::move(full_record);
}

const IntegrityManager::StoredRecord* IntegrityManager::stored_record(PairKey pair, std::uint64_t pair_seq) const {
    auto it = records_.find({pair, pair_seq});
    return it == records_.end() ? nullptr : &it->second;
}

Attestation IntegrityManager::attest_pair(PairKey pair, std::uint64_t epoch, std::uint64_t first_seq, Tick now) const {
    auto latest = latest_validated(pair);
    if (!latest || latest->pair_seq < first_seq)
        throw Error(Errc::UnknownTransaction, "no validated root for " + pair.str());
    Attestation a;
    a.kind = Attestation::Kind::PairRoot;
    a.subject = pair;
    a.epoch = epoch;
    a.first_seq = first_seq;
    a.count = latest->pair_seq - first_seq + 1;
    a.root = latest->root;
    a.issued_at = now;
    return attest(scheme_, key_, a, hasher_);
}

std::vector<Alert> IntegrityManager::drain_alerts() {
    std::vector<Alert> out(alerts_.begin() + static_cast<std::ptrdiff_t>(drained_), alerts_.end());
    drained_ = alerts_.size();
    return out;
}

}  // namespace dmoney
