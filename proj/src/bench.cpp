#include "swarm/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <map>
#include <sstream>
#include <thread>

namespace swarm
{
    using nlohmann::json;

    PolicySpec PolicySpec::parse(std::string_view text)
    {
        if (text == "autonomous")
            return PolicySpec{};
        if (text == "scripted")
            return PolicySpec{HumanPolicy{}.threshold};
        constexpr std::string_view prefix = "scripted:";
        if (text.starts_with(prefix))
        {
            const std::string value(text.substr(prefix.size()));
            std::size_t used = 0;
            double threshold = 0.0;
            try
            {
                threshold = std::stod(value, &used);
            }
            catch (const std::exception &)
            {
                used = 0;
            }
            if (used != value.size() || value.empty() || !(threshold > 0.0 && threshold <= 1.0))
                throw std::invalid_argument("scripted threshold must be a number in (0, 1], got '" + value + "'");
            return PolicySpec{threshold};
        }
        throw std::invalid_argument("policy must be 'autonomous' or 'scripted:<threshold>', got '" + std::string(text) + "'");
    }

    std::optional<HumanPolicy> PolicySpec::policy() const
    {
        if (!threshold)
            return std::nullopt;
        HumanPolicy p;
        p.threshold = *threshold;
        return p;
    }

    std::string PolicySpec::label() const
    {
        return policy_label(policy());
    }

    BenchAggregate aggregate_scores(const std::vector<BenchRow> &rows)
    {
        BenchAggregate agg;
        if (rows.empty())
            return agg;
        agg.min = rows.front().score;
        agg.max = rows.front().score;
        double sum = 0.0;
        for (const auto &r : rows)
        {
            sum += r.score;
            agg.min = std::min(agg.min, r.score);
            agg.max = std::max(agg.max, r.score);
        }
        agg.mean = sum / static_cast<double>(rows.size());
        return agg;
    }

    BenchRow row_from_log(const RunLog &log)
    {
        BenchRow row;
        row.scenario_digest = log.scenario_digest();
        row.seed = log.seed();
        row.policy = log.header.at("policy").get<std::string>();
        const ScoreTally tally = log.final_tally();
        row.classifications = tally.classifications;
        row.correct = tally.correct;
        row.completion_time = tally.elapsed;
        row.all_resolved = log.all_resolved();
        if (tally.elapsed > 0.0)
        {
            const Score s = compute_score(tally);
            row.rate = s.rate;
            row.accuracy = s.accuracy;
            row.score = s.score;
        }
        return row;
    }

    BenchResult run_bench(const Scenario &scenario, const PolicySpec &policy, int seeds, int workers)
    {
        const std::size_t count = static_cast<std::size_t>(std::max(seeds, 0));
        std::vector<RunLog> logs(count);
        std::atomic<std::size_t> next{0};
        auto worker = [&]
        {
            for (std::size_t i = next++; i < count; i = next++)
            {
                RunOptions options;
                options.policy = policy.policy();
                options.seed = scenario.mode_config.rng_seed + i;
                logs[i] = run_headless(scenario, options);
            }
        };

        const int threads = std::clamp(workers, 1, std::max(1, seeds));
        std::vector<std::jthread> pool;
        for (int t = 1; t < threads; ++t)
            pool.emplace_back(worker);
        worker();
        pool.clear();

        BenchResult result;
        result.report.scenario_digest = scenario_digest(scenario);
        result.report.policy = policy.label();
        for (const auto &log : logs)
            result.report.runs.push_back(row_from_log(log));
        result.report.aggregate = aggregate_scores(result.report.runs);
        result.logs = std::move(logs);
        return result;
    }

    json BenchReport::to_json() const
    {
        json runs_json = json::array();
        for (const auto &r : runs)
        {
            runs_json.push_back({{"scenario_digest", r.scenario_digest},
                                 {"seed", r.seed},
                                 {"policy", r.policy},
                                 {"rate", r.rate},
                                 {"accuracy", r.accuracy},
                                 {"score", r.score},
                                 {"completion_time", r.completion_time},
                                 {"classifications", r.classifications},
                                 {"correct", r.correct},
                                 {"all_resolved", r.all_resolved}});
        }
        return json{{"scenario_digest", scenario_digest},
                    {"policy", policy},
                    {"runs", std::move(runs_json)},
                    {"aggregate", {{"mean_score", aggregate.mean}, {"min_score", aggregate.min}, {"max_score", aggregate.max}}}};
    }

    BenchReport BenchReport::from_json(const json &j)
    {
        try
        {
            BenchReport r;
            r.scenario_digest = j.at("scenario_digest").get<std::string>();
            r.policy = j.at("policy").get<std::string>();
            for (const auto &row : j.at("runs"))
            {
                BenchRow b;
                b.scenario_digest = row.at("scenario_digest").get<std::string>();
                b.seed = row.at("seed").get<std::uint64_t>();
                b.policy = row.at("policy").get<std::string>();
                b.rate = row.at("rate").get<double>();
                b.accuracy = row.at("accuracy").get<double>();
                b.score = row.at("score").get<double>();
                b.completion_time = row.at("completion_time").get<double>();
                b.classifications = row.at("classifications").get<std::uint64_t>();
                b.correct = row.at("correct").get<std::uint64_t>();
                b.all_resolved = row.at("all_resolved").get<bool>();
                r.runs.push_back(std::move(b));
            }
            const auto &agg = j.at("aggregate");
            r.aggregate = BenchAggregate{agg.at("mean_score").get<double>(), agg.at("min_score").get<double>(),
                                         agg.at("max_score").get<double>()};
            return r;
        }
        catch (const json::exception &e)
        {
            throw MalformedReport(std::string("malformed bench report: ") + e.what());
        }
    }

    Comparison compare_reports(const BenchReport &a, const BenchReport &b)
    {
        if (a.scenario_digest != b.scenario_digest)
            throw DigestMismatch("reports come from different scenarios (" + a.scenario_digest + " vs " +
                                 b.scenario_digest + ")");
        Comparison c;
        c.scenario_digest = a.scenario_digest;
        c.policy_a = a.policy;
        c.policy_b = b.policy;

        std::map<std::uint64_t, double> b_scores;
        for (const auto &row : b.runs)
            b_scores[row.seed] = row.score;
        double sum_a = 0.0;
        double sum_b = 0.0;
        for (const auto &row : a.runs)
        {
            auto it = b_scores.find(row.seed);
            if (it == b_scores.end())
                continue;
            c.per_seed.push_back(SeedDelta{row.seed, row.score, it->second, it->second - row.score});
            sum_a += row.score;
            sum_b += it->second;
        }
        if (!c.per_seed.empty())
        {
            const double n = static_cast<double>(c.per_seed.size());
            c.mean_a = sum_a / n;
            c.mean_b = sum_b / n;
            c.mean_delta = c.mean_b - c.mean_a;
        }
        return c;
    }

    json Comparison::to_json() const
    {
        json rows = json::array();
        for (const auto &d : per_seed)
            rows.push_back({{"seed", d.seed}, {"score_a", d.score_a}, {"score_b", d.score_b}, {"delta", d.delta}});
        return json{{"scenario_digest", scenario_digest},
                    {"policy_a", policy_a},
                    {"policy_b", policy_b},
                    {"per_seed", std::move(rows)},
                    {"mean_a", mean_a},
                    {"mean_b", mean_b},
                    {"mean_delta", mean_delta}};
    }

    std::string Comparison::table() const
    {
        std::ostringstream out;
        char line[160];
        std::snprintf(line, sizeof line, "%-22s %14s %14s %12s\n", "seed", policy_a.c_str(), policy_b.c_str(), "delta");
        out << line;
        for (const auto &d : per_seed)
        {
            std::snprintf(line, sizeof line, "%-22llu %14.4f %14.4f %+12.4f\n", static_cast<unsigned long long>(d.seed),
                          d.score_a, d.score_b, d.delta);
            out << line;
        }
        std::snprintf(line, sizeof line, "%-22s %14.4f %14.4f %+12.4f\n", "mean", mean_a, mean_b, mean_delta);
        out << line;
        return out.str();
    }
}
