// dmoney: run scenarios and check their artifacts.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dmoney/data_client.hpp"
#include "dmoney/error.hpp"
#include "dmoney/simulator.hpp"

namespace fs = std::filesystem;
using namespace dmoney;

namespace {

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Bytes read_bytes(const fs::path& path) {
    auto text = read_text(path);
    return Bytes(text.begin(), text.end());
}

std::string trim(std::string s) {
    auto b = s.find_first_not_of(" \t\r\n");
    auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

struct Keys {
    std::string scheme;
    AttestingKeys attesting;
};

Keys read_keys(const fs::path& path) {
    Keys k;
    std::istringstream in(read_text(path));
    std::string name, value;
    while (in >> name >> value) {
        if (name == "scheme") k.scheme = value;
        if (name == "integrity-manager") k.attesting.integrity_manager = from_hex(value);
        if (name == "currency-manager") k.attesting.currency_manager = from_hex(value);
    }
    if (k.scheme != "ed25519") throw std::runtime_error("keys file must name the ed25519 scheme");
    if (k.attesting.integrity_manager.empty() || k.attesting.currency_manager.empty())
        throw std::runtime_error("keys file lacks a manager key");
    return k;
}

// "pair lo:hi <hex>" and "balance <id> <hex>" lines.
std::vector<Attestation> read_attestations(const fs::path& path) {
    std::vector<Attestation> out;
    std::istringstream in(read_text(path));
    std::string kind, subject, hex;
    while (in >> kind >> subject >> hex) out.push_back(Attestation::decode(from_hex(hex)));
    return out;
}

std::unique_ptr<ClientNode> load_client(Ed25519Scheme& scheme, const fs::path& dir, ClientId id) {
    auto path = dir / ("client-" + std::to_string(id) + ".snap");
    if (!fs::exists(path)) throw std::runtime_error("no snapshot for client " + std::to_string(id));
    auto key = scheme.generate(id, Bytes{0});
    auto node = std::make_unique<ClientNode>(id, scheme, key, id == kCurrencyManagerId);
    node->load_snapshot(read_bytes(path));
    return node;
}

int cmd_run(const std::string& file, std::optional<std::uint64_t> seed, const std::string& log_path,
            const std::string& state_dir) {
    auto scenario = load_scenario(file);
    auto result = run(scenario, seed);
    if (!log_path.empty()) {
        std::ofstream out(log_path, std::ios::binary | std::ios::trunc);
        out << result.log.text();
    } else {
        std::cout << result.log.text();
    }
    if (!state_dir.empty()) result.sim->save_state(state_dir);
    for (const auto& f : result.failures) std::cerr << "FAIL " << f << "\n";
    std::cerr << (result.passed() ? "PASS " : "FAIL ") << file << " (" << result.log.lines().size()
              << " log lines)\n";
    return result.passed() ? kPass : kFail;
}

int cmd_verify_grid(const std::string& grid_file, const fs::path& dir) {
    auto keys = read_keys(dir / "keys.txt");
    auto grid = MerkleHashGrid::from_text(read_text(grid_file));
    Ed25519Scheme scheme;
    std::map<ClientId, std::unique_ptr<ClientNode>> nodes;
    std::map<ClientId, Digest> mhtrs;
    std::map<PairKey, Digest> pttrs;
    for (auto id : grid.clients) {
        nodes[id] = load_client(scheme, dir, id);
        mhtrs[id] = nodes[id]->mhtr();
        for (const auto& [pair, root] : nodes[id]->pttrs()) pttrs[pair] = root;
    }
    GridVerdict v;
    try {
        v = IntegrityManager::verify_grid(scheme, keys.attesting.integrity_manager, grid, mhtrs, pttrs);
    } catch (const Error& e) {
        std::cout << "grid rejected: " << e.what() << "\n";
        return kFail;
    }
    if (v.matches) {
        std::cout << "grid ok: epoch " << grid.epoch << ", " << grid.size() << " clients, hash "
                  << grid.grid_hash.hex() << "\n";
        return kPass;
    }
    for (auto [r, c] : v.cells)
        std::cout << "mismatch at row " << r + 1 << " (client " << grid.clients[r] << "), column " << c + 1 << " (client "
                  << grid.clients[c] << ")\n";
    if (v.cells.empty()) std::cout << "mismatch in " << v.rows.size() << " rows, " << v.columns.size() << " columns\n";
    return kFail;
}

int cmd_export(const fs::path& dir, const std::string& sep) {
    auto table = TemporalBalanceTable::decode(read_bytes(dir / "manager.tbl"));
    std::map<Tick, std::string> labels;
    if (fs::exists(dir / "labels.txt")) {
        std::istringstream in(read_text(dir / "labels.txt"));
        std::string line;
        while (std::getline(in, line)) {
            auto tab = line.find('\t');
            if (tab != std::string::npos) labels[std::stoull(line.substr(0, tab))] = line.substr(tab + 1);
        }
    }
    auto label = [&](Tick t) {
        auto it = labels.find(t);
        return it == labels.end() ? std::to_string(t) : it->second;
    };
    std::cout << table.export_delimited(sep.empty() ? '\t' : sep[0], label);
    return kPass;
}

int cmd_prove(const fs::path& dir, const std::string& pair_text, std::uint64_t seq, std::optional<std::uint64_t> to,
              std::optional<ClientId> subject, const std::string& out_path) {
    auto pair = parse_pair(pair_text);
    ClientId who = subject.value_or(pair.lo == kCurrencyManagerId ? pair.hi : pair.lo);
    if (!pair.contains(who)) throw std::runtime_error("subject is not part of the pair");
    Ed25519Scheme scheme;
    auto node = load_client(scheme, dir, who);
    std::optional<Attestation> statement;
    for (const auto& a : read_attestations(dir / "attestations.txt"))
        if (a.kind == Attestation::Kind::PairRoot && a.subject == pair) statement = a;
    if (!statement) throw std::runtime_error("no attestation for pair " + pair.str());
    Grant grant{0, who, {pair}, false};
    auto vo = query_transactions(grant, *node, *statement, pair, seq, to.value_or(seq));
    auto hex = to_hex(vo.encode()) + "\n";
    if (out_path.empty()) {
        std::cout << hex;
    } else {
        std::ofstream(out_path, std::ios::binary | std::ios::trunc) << hex;
    }
    std::cerr << vo.records.size() << " records, attested count " << vo.attestation.count << "\n";
    return kPass;
}

int cmd_check(const std::string& vo_file, const std::string& keys_file, const std::string& latest_file) {
    auto keys = read_keys(keys_file);
    auto vo = VerificationObject::decode(from_hex(trim(read_text(vo_file))));
    Ed25519Scheme scheme;
    std::optional<Attestation> latest;
    if (!latest_file.empty()) {
        for (const auto& a : read_attestations(latest_file))
            if (a.kind == vo.attestation.kind && a.subject == vo.attestation.subject) latest = a;
        if (!latest) throw std::runtime_error("no current attestation for the object's subject");
    }
    auto v = verify_vo(scheme, vo, keys.attesting, latest.value_or(vo.attestation));
    auto yes = [](bool b) { return b ? "yes" : "no"; };
    std::cout << "correct: " << yes(v.correct) << "\ncomplete: " << yes(v.complete)
              << "\nfresh: " << (latest ? yes(v.fresh) : "unchecked") << "\n";
    bool ok = v.correct && v.complete && (!latest || v.fresh);
    return ok ? kPass : kFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dmoney: ledger-less digital currency simulator and verifier"};
    app.require_subcommand(1);

    std::string scenario_file, log_path, state_dir;
    std::optional<std::uint64_t> seed;
    auto* run_cmd = app.add_subcommand("run", "Run a scenario and check its assertions");
    run_cmd->add_option("scenario", scenario_file, "Scenario file (.scn or .json)")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--seed", seed, "Override the scenario seed");
    run_cmd->add_option("--log", log_path, "Write the event log here instead of stdout");
    run_cmd->add_option("--state-dir", state_dir, "Save final state for the other subcommands");

    std::string grid_file, dir;
    auto* grid_cmd = app.add_subcommand("verify-grid", "Check a Merkle hash grid against saved client state");
    grid_cmd->add_option("grid", grid_file, "Grid text file")->required()->check(CLI::ExistingFile);
    grid_cmd->add_option("state-dir", dir, "State directory")->required()->check(CLI::ExistingDirectory);

    std::string sep = "\t";
    auto* export_cmd = app.add_subcommand("export-balances", "Print the temporal balance table");
    export_cmd->add_option("state-dir", dir, "State directory")->required()->check(CLI::ExistingDirectory);
    export_cmd->add_option("--sep", sep, "Column separator");

    std::string pair_text, out_path;
    std::uint64_t seq = 0;
    std::optional<std::uint64_t> to;
    std::optional<ClientId> subject;
    auto* prove_cmd = app.add_subcommand("prove", "Emit a verification object for pair transactions");
    prove_cmd->add_option("state-dir", dir, "State directory")->required()->check(CLI::ExistingDirectory);
    prove_cmd->add_option("--pair", pair_text, "Pair as A:B")->required();
    prove_cmd->add_option("--seq", seq, "First sequence number")->required();
    prove_cmd->add_option("--to", to, "Last sequence number (default: --seq)");
    prove_cmd->add_option("--subject", subject, "Answering client (default: lower id)");
    prove_cmd->add_option("--out", out_path, "Write the object here instead of stdout");

    std::string vo_file, keys_file, latest_file;
    auto* check_cmd = app.add_subcommand("check", "Verify a verification object");
    check_cmd->add_option("vo", vo_file, "Verification object (hex)")->required()->check(CLI::ExistingFile);
    check_cmd->add_option("--keys", keys_file, "Manager keys file")->required()->check(CLI::ExistingFile);
    check_cmd->add_option("--latest", latest_file, "Current attestations, for freshness")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*run_cmd) return cmd_run(scenario_file, seed, log_path, state_dir);
        if (*grid_cmd) return cmd_verify_grid(grid_file, dir);
        if (*export_cmd) return cmd_export(dir, sep);
        if (*prove_cmd) return cmd_prove(dir, pair_text, seq, to, subject, out_path);
        if (*check_cmd) return cmd_check(vo_file, keys_file, latest_file);
    } catch (const Error& e) {
        std::cerr << "dmoney: " << e.what() << "\n";
        return e.code() == Errc::ScenarioParseError ? kUsage : kFail;
    } catch (const std::exception& e) {
        std::cerr << "dmoney: " << e.what() << "\n";
        return kFail;
    }
    return kUsage;
}
