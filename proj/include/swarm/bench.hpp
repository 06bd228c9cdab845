#pragma once

#include "swarm/run_log.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace swarm
{
    // "autonomous", "scripted" or "scripted:<threshold>".
    struct PolicySpec
    {
        std::optional<double> threshold; // empty for autonomous

        static PolicySpec parse(std::string_view text); // throws std::invalid_argument
        std::optional<HumanPolicy> policy() const;
        std::string label() const;
    };

    struct BenchRow
    {
        std::string scenario_digest;
        std::uint64_t seed = 0;
        std::string policy;
        double rate = 0.0;
        double accuracy = 0.0;
        double score = 0.0;
        double completion_time = 0.0;
        std::uint64_t classifications = 0;
        std::uint64_t correct = 0;
        bool all_resolved = false;
    };

    struct BenchAggregate
    {
        double mean = 0.0;
        double min = 0.0;
        double max = 0.0;
    };

    struct BenchReport
    {
        std::string scenario_digest;
        std::string policy;
        std::vector<BenchRow> runs; // ordered by seed
        BenchAggregate aggregate;

        nlohmann::json to_json() const;
        static BenchReport from_json(const nlohmann::json &j); // throws MalformedReport
    };

    BenchAggregate aggregate_scores(const std::vector<BenchRow> &rows);

    BenchRow row_from_log(const RunLog &log);

    struct BenchResult
    {
        BenchReport report;
        std::vector<RunLog> logs; // parallel to report.runs
    };

    // Runs seeds rng_seed, rng_seed + 1, ... in up to `workers` threads. The
    // result does not depend on the worker count.
    BenchResult run_bench(const Scenario &scenario, const PolicySpec &policy, int seeds, int workers = 1);

    class MalformedReport : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    class DigestMismatch : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    struct SeedDelta
    {
        std::uint64_t seed = 0;
        double score_a = 0.0;
        double score_b = 0.0;
        double delta = 0.0; // b - a
    };

    struct Comparison
    {
        std::string scenario_digest;
        std::string policy_a;
        std::string policy_b;
        std::vector<SeedDelta> per_seed;
        double mean_a = 0.0;
        double mean_b = 0.0;
        double mean_delta = 0.0;

        nlohmann::json to_json() const;
        std::string table() const;
    };

    // Pairs runs by seed. Throws DigestMismatch when the reports were produced
    // from different scenarios.
    Comparison compare_reports(const BenchReport &a, const BenchReport &b);
}
