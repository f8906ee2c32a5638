#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dmoney/peer_ledger.hpp"

namespace dmoney {

/// One scenario line: an operation, positional arguments and key=value
/// options. A bare word option such as `balances` has an empty value.
struct Step {
    std::size_t line = 0;
    std::string op;
    std::vector<std::string> args;
    std::map<std::string, std::string> options;

    std::uint64_t u64(std::size_t i) const;
    Amount amount(std::size_t i) const;
    PairKey pair(std::size_t i) const;

    bool has(const std::string& key) const { return options.count(key) > 0; }
    std::uint64_t opt_u64(const std::string& key, std::uint64_t fallback) const;
    double opt_real(const std::string& key, double fallback) const;
    std::optional<std::string> opt(const std::string& key) const;

    /// Canonical text form, as it would appear in a scenario file.
    std::string str() const;
};

struct Scenario {
    std::uint64_t seed = 0;
    std::vector<Step> steps;
};

/// Line-oriented format: one step per line, `#` starts a comment, double
/// quotes group words. Throws ScenarioParseError naming the line.
Scenario parse_scenario(std::string_view text);
/// {"seed": N, "steps": [{"op": "...", "args": [...], "<option>": value}]}
Scenario parse_scenario_json(std::string_view text);
/// Chooses the format by the first non-blank character.
Scenario parse_scenario_any(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);

/// "lo:hi" in either order. Throws ScenarioParseError.
PairKey parse_pair(std::string_view text);

}  // namespace dmoney
