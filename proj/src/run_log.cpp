#include "swarm/run_log.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace swarm
{
    using nlohmann::json;

    std::string policy_label(const std::optional<HumanPolicy> &policy)
    {
        if (!policy)
            return "autonomous";
        char buf[64];
        std::snprintf(buf, sizeof buf, "scripted:%g", policy->threshold);
        return buf;
    }

    ScoreTally RunLog::final_tally() const
    {
        return tally_from_json(final_record.at("tally"));
    }

    bool RunLog::all_resolved() const
    {
        return final_record.at("all_resolved").get<bool>();
    }

    std::string RunLog::scenario_digest() const
    {
        return header.at("scenario_digest").get<std::string>();
    }

    std::uint64_t RunLog::seed() const
    {
        return header.at("seed").get<std::uint64_t>();
    }

    std::string RunLog::to_ndjson() const
    {
        std::string out = header.dump();
        out += '\n';
        for (const auto &r : records)
        {
            out += r.dump();
            out += '\n';
        }
        out += final_record.dump();
        out += '\n';
        return out;
    }

    RunLog RunLog::from_ndjson(std::string_view text)
    {
        RunLog log;
        std::istringstream in{std::string(text)};
        std::string line;
        bool have_header = false;
        bool have_final = false;
        std::size_t lineno = 0;
        while (std::getline(in, line))
        {
            ++lineno;
            if (line.empty())
                continue;
            json j;
            try
            {
                j = json::parse(line);
            }
            catch (const json::parse_error &e)
            {
                throw std::runtime_error("run log line " + std::to_string(lineno) + ": " + e.what());
            }
            const std::string type = j.value("type", "");
            if (type == "header" && !have_header)
            {
                log.header = std::move(j);
                have_header = true;
            }
            else if (type == "step" && have_header && !have_final)
                log.records.push_back(std::move(j));
            else if (type == "final" && have_header && !have_final)
            {
                log.final_record = std::move(j);
                have_final = true;
            }
            else
                throw std::runtime_error("run log line " + std::to_string(lineno) + ": unexpected record");
        }
        if (!have_header || !have_final)
            throw std::runtime_error("run log is missing its header or final record");
        return log;
    }

    std::vector<ScriptedCommand> RunLog::command_script() const
    {
        std::vector<ScriptedCommand> script;
        for (const auto &r : records)
        {
            const auto step = r.at("step").get<std::uint64_t>();
            for (const auto &c : r.at("commands"))
                script.push_back(ScriptedCommand{step, command_from_json(c)});
        }
        return script;
    }

    RunLog run_headless(const Scenario &scenario, const RunOptions &options)
    {
        Scenario effective = scenario;
        if (options.seed)
            effective.mode_config.rng_seed = *options.seed;

        Engine engine(effective, options.params);
        RunLog log;
        log.header = json{{"type", "header"},
                          {"scenario_digest", scenario_digest(scenario)},
                          {"seed", effective.mode_config.rng_seed},
                          {"engine_version", kEngineVersion},
                          {"policy", options.label.empty() ? policy_label(options.policy) : options.label}};

        std::uint64_t seq = 0;
        std::size_t next_scripted = 0;
        auto script = options.script;
        std::stable_sort(script.begin(), script.end(),
                         [](const ScriptedCommand &a, const ScriptedCommand &b) { return a.step < b.step; });

        for (std::uint64_t step = 0;; ++step)
        {
            const bool first = step == 0;
            if (engine.complete())
                break;

            std::vector<Command> pending;
            while (next_scripted < script.size() && script[next_scripted].step <= step)
            {
                if (script[next_scripted].step == step)
                    pending.push_back(script[next_scripted].command);
                ++next_scripted;
            }
            if (options.policy)
            {
                // Step 0 hands the swarm over to the operator; decisions start on
                // the next step and use the pre-tick world, as a live operator would.
                if (first && engine.world().mode != Mode::HumanTeaming)
                    pending.push_back(Command{SetModeCommand{Mode::HumanTeaming}, options.policy->client_id, 0});
                else
                {
                    auto decided = options.policy->decide(engine.world());
                    pending.insert(pending.end(), decided.begin(), decided.end());
                }
            }
            for (auto &c : pending)
                c.seq = ++seq;

            const TickReport report = engine.step(pending);

            json commands = json::array();
            json outcomes = json::array();
            for (const auto &o : report.outcomes)
            {
                commands.push_back(o.command);
                outcomes.push_back({{"seq", o.seq},
                                    {"accepted", !o.rejected},
                                    {"reason", o.rejected ? json(to_string(*o.rejected)) : json(nullptr)}});
            }
            json agents = json::array();
            for (const auto &a : engine.world().agents)
            {
                agents.push_back({{"id", a.id},
                                  {"lat", a.position.lat},
                                  {"lon", a.position.lon},
                                  {"energy", a.remaining_energy},
                                  {"task", a.current_task ? json(*a.current_task) : json(nullptr)}});
            }
            log.records.push_back(json{{"type", "step"},
                                       {"step", step},
                                       {"tick", report.tick},
                                       {"time", report.sim_time},
                                       {"advanced", report.advanced},
                                       {"mode", to_string(engine.world().mode)},
                                       {"agents", std::move(agents)},
                                       {"commands", std::move(commands)},
                                       {"outcomes", std::move(outcomes)},
                                       {"events", report.events}});

            // A paused run with nothing left to resume it would spin forever.
            if (!report.advanced && engine.world().paused && next_scripted >= script.size())
                break;
        }

        const auto &world = engine.world();
        json score = nullptr;
        if (world.tally.elapsed > 0.0)
        {
            const Score s = compute_score(world.tally);
            score = {{"rate", s.rate}, {"accuracy", s.accuracy}, {"score", s.score}};
        }
        log.final_record = json{{"type", "final"},
                                {"tally", to_json(world.tally)},
                                {"score", std::move(score)},
                                {"all_resolved", world.unknown_targets() == 0},
                                {"ticks", world.tick}};
        return log;
    }

    RunLog replay(const Scenario &scenario, const RunLog &log)
    {
        if (scenario_digest(scenario) != log.scenario_digest())
            throw std::runtime_error("run log was recorded against a different scenario");
        RunOptions options;
        options.script = log.command_script();
        options.seed = log.seed();
        options.label = log.header.at("policy").get<std::string>();
        return run_headless(scenario, options);
    }
}
