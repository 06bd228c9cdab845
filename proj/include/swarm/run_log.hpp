#pragma once

#include "swarm/engine.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace swarm
{
    // A command due at a given step of a headless run. Steps count engine
    // invocations, so they stay aligned even across paused ticks.
    struct ScriptedCommand
    {
        std::uint64_t step = 0;
        Command command;

        bool operator==(const ScriptedCommand &) const = default;
    };

    // Newline-delimited JSON: one header line, one record per step, one final line.
    struct RunLog
    {
        nlohmann::json header;
        std::vector<nlohmann::json> records;
        nlohmann::json final_record;

        ScoreTally final_tally() const;
        bool all_resolved() const;
        std::string scenario_digest() const;
        std::uint64_t seed() const;

        std::string to_ndjson() const;
        // Throws std::runtime_error on malformed input.
        static RunLog from_ndjson(std::string_view text);

        // Every command the run applied, keyed by step, in application order.
        std::vector<ScriptedCommand> command_script() const;
    };

    struct RunOptions
    {
        std::optional<HumanPolicy> policy;
        std::vector<ScriptedCommand> script;
        // Replaces mode_config.rng_seed for this run; the digest stays that of
        // the scenario as given.
        std::optional<std::uint64_t> seed;
        EngineParams params;
        // Policy label written to the header; derived from policy when empty.
        std::string label;
    };

    // Runs to the time limit or until every target is classified, as fast as
    // the CPU allows.
    RunLog run_headless(const Scenario &scenario, const RunOptions &options = {});

    // Re-simulates a log's command script against the scenario.
    RunLog replay(const Scenario &scenario, const RunLog &log);

    std::string policy_label(const std::optional<HumanPolicy> &policy);
}
