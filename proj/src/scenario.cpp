#include "dmoney/scenario.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dmoney/error.hpp"

namespace dmoney {

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
    throw Error(Errc::ScenarioParseError, "line " + std::to_string(line) + ": " + msg);
}

template <typename T>
std::optional<T> number(std::string_view s) {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

std::optional<bool> boolean(std::string_view s) {
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    return std::nullopt;
}

// Positional types: n unsigned, a positive amount, p pair, w word, t free text.
// Option types: n unsigned, r real, p pair, l pair list, b boolean, f flag.
struct Shape {
    std::size_t min;
    std::string args;
    std::map<std::string, char> options;
};

const std::map<std::string, Shape>& shapes() {
    static const std::map<std::string, Shape> table{
        {"seed", {1, "n", {}}},
        {"deadline", {1, "n", {}}},
        {"policy", {0, "w", {{"delay", 'r'}, {"max-delay", 'n'}, {"duplicate", 'r'}, {"drop", 'r'}}}},
        {"enroll", {1, "n", {{"limit", 'n'}}}},
        {"register", {1, "ww", {}}},
        {"issue", {2, "na", {}}},
        {"redeem", {2, "na", {}}},
        {"transact", {3, "nna", {}}},
        {"random", {1, "n", {{"min", 'n'}, {"max", 'n'}}}},
        {"tick", {1, "n", {}}},
        {"quiesce", {0, "", {}}},
        {"capture", {1, "n", {}}},
        {"persist", {1, "n", {}}},
        {"recover", {1, "n", {}}},
        {"recover-balance", {1, "n", {}}},
        {"reset-epoch", {2, "nn", {}}},
        {"repair", {3, "nnn", {}}},
        {"suspend", {1, "n", {}}},
        {"reinstate", {1, "n", {}}},
        {"label", {2, "nt", {}}},
        {"authorize", {2, "nn", {{"pairs", 'l'}, {"balances", 'f'}}}},
        {"query", {2, "nn", {{"pair", 'p'}, {"balances", 'f'}, {"from", 'n'}, {"to", 'n'}}}},
        {"fault tamper", {3, "wnn", {{"leaf", 'n'}, {"byte", 'n'}}}},
        {"fault double-spend", {5, "wnnna", {}}},
        {"fault replay", {3, "wnn", {{"seq", 'n'}}}},
        {"fault forge", {3, "wna", {}}},
        {"fault crash", {2, "wn", {}}},
        {"fault partition-manager", {1, "w", {{"ticks", 'n'}}}},
        {"fault omit", {2, "wn", {{"record", 'n'}}}},
        {"expect balance", {3, "wnn", {}}},
        {"expect conservation", {2, "ww", {}}},
        {"expect alerts", {3, "wwn", {}}},
        {"expect events", {3, "wwn", {}}},
        {"expect errors", {3, "wwn", {}}},
        {"expect verdict", {1, "w", {{"correct", 'b'}, {"complete", 'b'}, {"fresh", 'b'}}}},
        {"expect consistent", {1, "w", {}}},
        {"expect recovered", {2, "wn", {}}},
    };
    return table;
}

bool valid_pair(std::string_view s) {
    auto colon = s.find(':');
    return colon != std::string_view::npos && number<std::uint64_t>(s.substr(0, colon)) &&
           number<std::uint64_t>(s.substr(colon + 1));
}

void validate(const Step& step) {
    std::string key = step.op;
    if ((step.op == "fault" || step.op == "expect") && !step.args.empty()) key += " " + step.args[0];
    auto it = shapes().find(key);
    if (it == shapes().end()) fail(step.line, "unknown step '" + key + "'");
    const auto& shape = it->second;
    if (step.args.size() < shape.min || step.args.size() > shape.args.size())
        fail(step.line, "'" + key + "' takes " + std::to_string(shape.min) + ".." +
                            std::to_string(shape.args.size()) + " arguments");
    for (std::size_t i = 0; i < step.args.size(); ++i) {
        const auto& a = step.args[i];
        bool ok = true;
        switch (shape.args[i]) {
            case 'n': ok = number<std::uint64_t>(a).has_value(); break;
            case 'a': ok = number<std::int64_t>(a).value_or(0) > 0; break;
            case 'p': ok = valid_pair(a); break;
            default: break;
        }
        if (!ok) fail(step.line, "bad argument '" + a + "' to '" + key + "'");
    }
    for (const auto& [k, v] : step.options) {
        auto o = shape.options.find(k);
        if (o == shape.options.end()) fail(step.line, "'" + key + "' has no option '" + k + "'");
        bool ok = true;
        switch (o->second) {
            case 'n': ok = number<std::uint64_t>(v).has_value(); break;
            case 'r': {
                auto r = number<double>(v);
                ok = r && *r >= 0.0 && *r <= 1.0;
                break;
            }
            case 'p': ok = valid_pair(v); break;
            case 'b': ok = boolean(v).has_value(); break;
            case 'f': ok = v.empty(); break;
            case 'l': {
                std::stringstream ss(v);
                std::string item;
                while (ok && std::getline(ss, item, ',')) ok = valid_pair(item);
                break;
            }
            default: break;
        }
        if (!ok) fail(step.line, "bad value for option '" + k + "'");
    }
    if (key == "policy" && !step.args.empty() && (step.args[0] != "instant" || !step.options.empty()))
        fail(step.line, "policy takes 'instant' or options");
    if (key == "register" && !(step.args.size() == 1 ? step.args[0] == "all"
                                                      : number<std::uint64_t>(step.args[0]) &&
                                                            number<std::uint64_t>(step.args[1])))
        fail(step.line, "register takes 'all' or two client ids");
    if (key == "query" && step.has("pair") == step.has("balances"))
        fail(step.line, "query needs exactly one of pair= and balances");
    if (key == "expect conservation" && step.args[1] != "holds" && step.args[1] != "violated")
        fail(step.line, "expect conservation takes 'holds' or 'violated'");
}

std::vector<std::string> tokenize(std::string_view line, std::size_t number) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false, any = false;
    for (char c : line) {
        if (quoted) {
            if (c == '"')
                quoted = false;
            else
                cur += c;
        } else if (c == '"') {
            quoted = any = true;
        } else if (c == '#') {
            break;
        } else if (c == ' ' || c == '\t' || c == '\r') {
            if (any) out.push_back(std::move(cur));
            cur.clear();
            any = false;
        } else {
            cur += c;
            any = true;
        }
    }
    if (quoted) fail(number, "unterminated quote");
    if (any) out.push_back(std::move(cur));
    return out;
}

bool is_flag(const Step& step, const std::string& word) {
    std::string key = step.op;
    if ((step.op == "fault" || step.op == "expect") && !step.args.empty()) key += " " + step.args[0];
    auto it = shapes().find(key);
    if (it == shapes().end()) return false;
    auto o = it->second.options.find(word);
    return o != it->second.options.end() && o->second == 'f';
}

void add_step(Scenario& s, Step step) {
    validate(step);
    if (step.op == "seed")
        s.seed = step.u64(0);
    else
        s.steps.push_back(std::move(step));
}

}  // namespace

std::uint64_t Step::u64(std::size_t i) const {
    auto v = number<std::uint64_t>(args.at(i));
    if (!v) fail(line, "expected a number, got '" + args.at(i) + "'");
    return *v;
}

Amount Step::amount(std::size_t i) const {
    auto v = number<std::int64_t>(args.at(i));
    if (!v) fail(line, "expected an amount, got '" + args.at(i) + "'");
    return *v;
}

PairKey Step::pair(std::size_t i) const {
    try {
        return parse_pair(args.at(i));
    } catch (const Error&) {
        fail(line, "expected a pair, got '" + args.at(i) + "'");
    }
}

std::uint64_t Step::opt_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = options.find(key);
    if (it == options.end()) return fallback;
    auto v = number<std::uint64_t>(it->second);
    if (!v) fail(line, "option '" + key + "' is not a number");
    return *v;
}

double Step::opt_real(const std::string& key, double fallback) const {
    auto it = options.find(key);
    if (it == options.end()) return fallback;
    auto v = number<double>(it->second);
    if (!v) fail(line, "option '" + key + "' is not a number");
    return *v;
}

std::optional<std::string> Step::opt(const std::string& key) const {
    auto it = options.find(key);
    if (it == options.end()) return std::nullopt;
    return it->second;
}

std::string Step::str() const {
    std::string out = op;
    for (const auto& a : args) out += " " + (a.find(' ') == std::string::npos ? a : "\"" + a + "\"");
    for (const auto& [k, v] : options) out += " " + (v.empty() ? k : k + "=" + v);
    return out;
}

PairKey parse_pair(std::string_view text) {
    if (!valid_pair(text)) throw Error(Errc::ScenarioParseError, "bad pair '" + std::string(text) + "'");
    auto colon = text.find(':');
    return PairKey::of(*number<std::uint64_t>(text.substr(0, colon)), *number<std::uint64_t>(text.substr(colon + 1)));
}

Scenario parse_scenario(std::string_view text) {
    Scenario s;
    std::size_t number = 0;
    while (!text.empty()) {
        auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++number;
        auto tokens = tokenize(line, number);
        if (tokens.empty()) continue;
        Step step;
        step.line = number;
        step.op = tokens[0];
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            const auto& t = tokens[i];
            auto eq = t.find('=');
            if (step.op != "label" && eq != std::string::npos && eq > 0) {
                step.options[t.substr(0, eq)] = t.substr(eq + 1);
            } else if (is_flag(step, t)) {
                step.options[t] = "";
            } else {
                step.args.push_back(t);
            }
        }
        add_step(s, std::move(step));
    }
    return s;
}

Scenario parse_scenario_json(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(0, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("steps") || !doc["steps"].is_array()) fail(0, "expected an object with steps");
    Scenario s;
    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_unsigned()) fail(0, "seed must be an unsigned number");
        s.seed = doc["seed"].get<std::uint64_t>();
    }
    auto scalar = [](const nlohmann::json& v, std::size_t n) -> std::string {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
        if (v.is_number_float()) {
            std::ostringstream os;
            os << v.get<double>();
            return os.str();
        }
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        fail(n, "unsupported value " + v.dump());
    };
    std::size_t n = 0;
    for (const auto& item : doc["steps"]) {
        ++n;
        if (!item.is_object() || !item.contains("op") || !item["op"].is_string()) fail(n, "step needs an op");
        Step step;
        step.line = n;
        step.op = item["op"].get<std::string>();
        for (const auto& [k, v] : item.items()) {
            if (k == "op") continue;
            if (k == "args") {
                if (!v.is_array()) fail(n, "args must be an array");
                for (const auto& a : v) step.args.push_back(scalar(a, n));
            } else if (v.is_boolean() && v.get<bool>() && k == "balances") {
                step.options[k] = "";
            } else if (v.is_array()) {
                std::string joined;
                for (const auto& a : v) joined += (joined.empty() ? "" : ",") + scalar(a, n);
                step.options[k] = joined;
            } else {
                step.options[k] = scalar(v, n);
            }
        }
        add_step(s, std::move(step));
    }
    return s;
}

Scenario parse_scenario_any(std::string_view text) {
    auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && text[first] == '{') return parse_scenario_json(text);
    return parse_scenario(text);
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::ScenarioParseError, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario_any(ss.str());
}

}  // namespace dmoney
