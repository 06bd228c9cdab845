#include "support.hpp"

#include "swarm/run_log.hpp"

#include <doctest.h>

using namespace swarm;
using nlohmann::json;

namespace
{
    ScriptedCommand at(std::uint64_t step, CommandBody body, std::string by = "script")
    {
        return ScriptedCommand{step, Command{std::move(body), std::move(by), 0}};
    }

    // Record fields that describe world state rather than the step's inputs.
    json state_of(const json &record)
    {
        return json{{"tick", record.at("tick")},
                    {"time", record.at("time")},
                    {"advanced", record.at("advanced")},
                    {"agents", record.at("agents")}};
    }
}

TEST_CASE("identical runs produce byte-identical logs")
{
    const Scenario s = default_scenario();
    CHECK(run_headless(s).to_ndjson() == run_headless(s).to_ndjson());

    RunOptions scripted;
    scripted.policy = HumanPolicy{};
    CHECK(run_headless(s, scripted).to_ndjson() == run_headless(s, scripted).to_ndjson());
}

TEST_CASE("log layout")
{
    const RunLog log = run_headless(default_scenario());
    CHECK(log.header.at("type") == "header");
    CHECK(log.header.at("scenario_digest") == scenario_digest(default_scenario()));
    CHECK(log.header.at("seed") == default_scenario().mode_config.rng_seed);
    CHECK(log.header.at("engine_version") == kEngineVersion);
    CHECK(log.header.at("policy") == "autonomous");
    REQUIRE_FALSE(log.records.empty());
    for (std::size_t i = 0; i < log.records.size(); ++i)
    {
        CHECK(log.records[i].at("type") == "step");
        CHECK(log.records[i].at("step") == i);
    }
    CHECK(log.final_record.at("type") == "final");
    CHECK(log.all_resolved());
    CHECK(log.final_tally().classifications == 12);

    const std::string text = log.to_ndjson();
    CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(log.records.size() + 2));
}

TEST_CASE("ndjson round-trip")
{
    RunOptions options;
    options.policy = HumanPolicy{0.6};
    const RunLog log = run_headless(default_scenario(), options);
    const RunLog back = RunLog::from_ndjson(log.to_ndjson());
    CHECK(back.to_ndjson() == log.to_ndjson());
    CHECK(back.final_tally() == log.final_tally());
    CHECK(back.command_script() == log.command_script());
}

TEST_CASE("malformed logs are rejected")
{
    CHECK_THROWS(RunLog::from_ndjson(""));
    CHECK_THROWS(RunLog::from_ndjson("{\"type\":\"step\"}\n"));
    CHECK_THROWS(RunLog::from_ndjson("not json\n"));
    const std::string text = run_headless(default_scenario()).to_ndjson();
    CHECK_THROWS(RunLog::from_ndjson(text.substr(0, text.size() / 2)));
}

TEST_CASE("replaying a scripted-human log reproduces it")
{
    RunOptions options;
    options.policy = HumanPolicy{};
    const RunLog log = run_headless(default_scenario(), options);
    CHECK_FALSE(log.command_script().empty());
    const RunLog again = replay(default_scenario(), log);
    CHECK(again.final_tally() == log.final_tally());
    CHECK(again.to_ndjson() == log.to_ndjson());
}

TEST_CASE("replay refuses a different scenario")
{
    const RunLog log = run_headless(default_scenario());
    Scenario other = default_scenario();
    other.name = "other";
    CHECK_THROWS(replay(other, log));
}

TEST_CASE("mode switching every 100 steps stays replayable")
{
    RunOptions options;
    for (std::uint64_t step = 100; step <= 2000; step += 100)
        options.script.push_back(at(step, SetModeCommand{(step / 100) % 2 ? Mode::HumanTeaming : Mode::Autonomous}));
    options.script.push_back(at(150, ClassifyCommand{Actor::human("op"), "t01", GroundTruth::Casualty}));
    options.script.push_back(at(250, ReassignCommand{"uav3", "t09"}));
    options.script.push_back(at(260, PauseCommand{}));
    options.script.push_back(at(270, ResumeCommand{}));
    const RunLog log = run_headless(default_scenario(), options);
    const RunLog again = replay(default_scenario(), log);
    CHECK(again.to_ndjson() == log.to_ndjson());
    CHECK(log.all_resolved());

    // Paused steps are logged without advancing.
    CHECK(log.records[265].at("advanced") == false);
    CHECK(log.records[265].at("tick") == log.records[264].at("tick"));
}

TEST_CASE("switching mode mid-run only changes the mode")
{
    const Scenario s = default_scenario();
    RunOptions switched;
    switched.script.push_back(at(500, SetModeCommand{Mode::HumanTeaming}));
    const RunLog a = run_headless(s);
    const RunLog b = run_headless(s, switched);
    REQUIRE(a.records.size() == b.records.size());
    CHECK(b.records[500].at("outcomes")[0].at("accepted") == true);
    for (std::size_t i = 0; i < a.records.size(); ++i)
    {
        CAPTURE(i);
        CHECK(state_of(a.records[i]) == state_of(b.records[i]));
        CHECK(b.records[i].at("mode") == (i >= 500 ? "HumanTeaming" : "Autonomous"));
    }
    CHECK(a.final_tally() == b.final_tally());
    CHECK(b.all_resolved());
}

TEST_CASE("seed overrides keep the scenario digest")
{
    RunOptions options;
    options.seed = 77;
    const RunLog log = run_headless(default_scenario(), options);
    CHECK(log.seed() == 77);
    CHECK(log.scenario_digest() == scenario_digest(default_scenario()));
    CHECK(replay(default_scenario(), log).to_ndjson() == log.to_ndjson());
}

TEST_CASE("rejected script commands are logged with a reason")
{
    RunOptions options;
    options.script.push_back(at(3, ClassifyCommand{Actor::human("op"), "t01", GroundTruth::Casualty}));
    const RunLog log = run_headless(default_scenario(), options);
    const json &outcome = log.records[3].at("outcomes").at(0);
    CHECK(outcome.at("accepted") == false);
    CHECK(outcome.at("reason") == "ModeForbids");
}

TEST_CASE("final score matches the tally")
{
    RunOptions options;
    options.policy = HumanPolicy{};
    const RunLog log = run_headless(default_scenario(), options);
    const Score s = compute_score(log.final_tally());
    CHECK(log.final_record.at("score").at("score") == s.score);
}

TEST_CASE("runs stop at the time limit")
{
    Scenario s = default_scenario();
    s.mode_config.time_limit = 30.0;
    const RunLog log = run_headless(s);
    CHECK(log.records.size() == 300);
    CHECK_FALSE(log.all_resolved());
    CHECK(log.final_tally().elapsed == doctest::Approx(30.0));
}
