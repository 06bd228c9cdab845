#include "swarm/bench.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace
{
    enum Exit : int
    {
        Ok = 0,
        InvalidInput = 1,
        RuntimeFailure = 2,
        Mismatch = 3,
    };

    std::string read_file(const std::string &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw std::runtime_error("cannot read '" + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    void write_file(const fs::path &path, const std::string &text)
    {
        std::ofstream out(path, std::ios::binary);
        if (!out || !(out << text))
            throw std::runtime_error("cannot write '" + path.string() + "'");
    }

    // Prints a diagnostic and returns the exit code; scenario errors name the
    // offending file and field.
    std::optional<swarm::Scenario> load_scenario(const std::string &path, int &code)
    {
        try
        {
            if (path.empty())
                return swarm::default_scenario();
            return swarm::parse_scenario(read_file(path));
        }
        catch (const swarm::ScenarioError &e)
        {
            std::fprintf(stderr, "%s: %s\n", path.c_str(), e.what());
        }
        catch (const std::exception &e)
        {
            std::fprintf(stderr, "%s: %s\n", path.c_str(), e.what());
        }
        code = InvalidInput;
        return std::nullopt;
    }

    int cmd_run(const std::string &scenario_path, const std::string &policy_text, int seeds, int workers,
                const std::string &out_dir)
    {
        int code = Ok;
        auto scenario = load_scenario(scenario_path, code);
        if (!scenario)
            return code;
        swarm::PolicySpec policy;
        try
        {
            policy = swarm::PolicySpec::parse(policy_text);
        }
        catch (const std::invalid_argument &e)
        {
            std::fprintf(stderr, "--policy: %s\n", e.what());
            return InvalidInput;
        }

        try
        {
            const auto result = swarm::run_bench(*scenario, policy, seeds, workers);
            const std::string report = result.report.to_json().dump(2) + "\n";
            if (!out_dir.empty())
            {
                fs::create_directories(out_dir);
                write_file(fs::path(out_dir) / "report.json", report);
                for (const auto &log : result.logs)
                    write_file(fs::path(out_dir) / ("runlog-seed-" + std::to_string(log.seed()) + ".ndjson"), log.to_ndjson());
            }
            std::fputs(report.c_str(), stdout);

            std::fprintf(stderr, "%-22s %10s %10s %10s %10s\n", "seed", "rate", "accuracy", "score", "time");
            for (const auto &r : result.report.runs)
                std::fprintf(stderr, "%-22llu %10.4f %10.4f %10.4f %10.1f\n", static_cast<unsigned long long>(r.seed), r.rate,
                             r.accuracy, r.score, r.completion_time);
            const auto &agg = result.report.aggregate;
            std::fprintf(stderr, "%s: mean %.4f  min %.4f  max %.4f\n", result.report.policy.c_str(), agg.mean, agg.min,
                         agg.max);
            return Ok;
        }
        catch (const std::exception &e)
        {
            std::fprintf(stderr, "run failed: %s\n", e.what());
            return RuntimeFailure;
        }
    }

    std::optional<swarm::BenchReport> load_report(const std::string &path)
    {
        try
        {
            return swarm::BenchReport::from_json(json::parse(read_file(path)));
        }
        catch (const std::exception &e)
        {
            std::fprintf(stderr, "%s: MalformedReport: %s\n", path.c_str(), e.what());
            return std::nullopt;
        }
    }

    int cmd_compare(const std::string &path_a, const std::string &path_b)
    {
        auto a = load_report(path_a);
        auto b = load_report(path_b);
        if (!a || !b)
            return InvalidInput;
        try
        {
            const auto cmp = swarm::compare_reports(*a, *b);
            std::printf("%s\n", cmp.to_json().dump(2).c_str());
            std::fputs(cmp.table().c_str(), stderr);
            return Ok;
        }
        catch (const swarm::DigestMismatch &e)
        {
            std::fprintf(stderr, "DigestMismatch: %s\n", e.what());
            return Mismatch;
        }
    }

    int cmd_validate(const std::string &path)
    {
        int code = Ok;
        if (!load_scenario(path, code))
            return code;
        std::fprintf(stderr, "%s: ok\n", path.c_str());
        return Ok;
    }

    int cmd_replay(const std::string &scenario_path, const std::string &log_path)
    {
        int code = Ok;
        auto scenario = load_scenario(scenario_path, code);
        if (!scenario)
            return code;
        swarm::RunLog log;
        try
        {
            log = swarm::RunLog::from_ndjson(read_file(log_path));
        }
        catch (const std::exception &e)
        {
            std::fprintf(stderr, "%s: %s\n", log_path.c_str(), e.what());
            return InvalidInput;
        }
        if (swarm::scenario_digest(*scenario) != log.scenario_digest())
        {
            std::fprintf(stderr, "DigestMismatch: %s was recorded against scenario %s, not %s\n", log_path.c_str(),
                         log.scenario_digest().c_str(), swarm::scenario_digest(*scenario).c_str());
            return Mismatch;
        }
        try
        {
            const swarm::RunLog again = swarm::replay(*scenario, log);
            const bool identical = again.to_ndjson() == log.to_ndjson();
            std::printf("%s\n", json{{"identical", identical},
                                     {"steps", again.records.size()},
                                     {"tally", swarm::to_json(again.final_tally())}}
                                    .dump(2)
                                    .c_str());
            if (!identical)
            {
                std::fprintf(stderr, "replay diverged from %s\n", log_path.c_str());
                return Mismatch;
            }
            return Ok;
        }
        catch (const std::exception &e)
        {
            std::fprintf(stderr, "replay failed: %s\n", e.what());
            return RuntimeFailure;
        }
    }
}

int main(int argc, char **argv)
{
    CLI::App app{"Headless benchmark harness for the swarm teaming simulator"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string policy = "autonomous";
    int seeds = 1;
    int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::string out_dir;
    auto *run = app.add_subcommand("run", "Run seeds headless and print a BenchReport");
    run->add_option("--scenario", scenario_path, "Scenario file (default: built-in scenario)");
    run->add_option("--policy", policy, "autonomous | scripted | scripted:<threshold>");
    run->add_option("--seeds", seeds, "Number of seeds")->check(CLI::PositiveNumber);
    run->add_option("--workers", workers, "Parallel workers")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "Directory for report.json and run logs");

    std::string report_a;
    std::string report_b;
    auto *compare = app.add_subcommand("compare", "Per-seed score deltas between two reports (b - a)");
    compare->add_option("a", report_a)->required();
    compare->add_option("b", report_b)->required();

    std::string validate_path;
    auto *validate = app.add_subcommand("validate", "Check a scenario file");
    validate->add_option("path", validate_path)->required();

    std::string replay_scenario;
    std::string replay_log;
    auto *replay = app.add_subcommand("replay", "Re-simulate a run log and check it reproduces");
    replay->add_option("--scenario", replay_scenario, "Scenario file (default: built-in scenario)");
    replay->add_option("--log", replay_log, "Run log (ndjson)")->required();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : InvalidInput;
    }

    if (*run)
        return cmd_run(scenario_path, policy, seeds, workers, out_dir);
    if (*compare)
        return cmd_compare(report_a, report_b);
    if (*validate)
        return cmd_validate(validate_path);
    return cmd_replay(replay_scenario, replay_log);
}
