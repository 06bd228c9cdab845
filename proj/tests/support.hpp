#pragma once

// Generators and independent reference implementations shared by the suites.

#include "swarm/allocation.hpp"
#include "swarm/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace testing
{
    using Rng = std::mt19937_64;

    inline double uniform(Rng &rng, double lo, double hi)
    {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    }

    inline int uniform_int(Rng &rng, int lo, int hi)
    {
        return std::uniform_int_distribution<int>(lo, hi)(rng);
    }

    inline bool coin(Rng &rng, double p = 0.5)
    {
        return std::bernoulli_distribution(p)(rng);
    }

    // Position offset by (east, north) meters on a local flat patch.
    inline swarm::GeoPosition offset(const swarm::GeoPosition &origin, double east, double north)
    {
        constexpr double deg = std::numbers::pi / 180.0;
        const double r = 6371008.8;
        swarm::GeoPosition p = origin;
        p.lat += north / r / deg;
        p.lon += east / (r * std::cos(origin.lat * deg)) / deg;
        return p;
    }

    // Great-circle distance from the chord between unit vectors.
    inline double chord_distance(const swarm::GeoPosition &a, const swarm::GeoPosition &b)
    {
        constexpr double deg = std::numbers::pi / 180.0;
        auto unit = [&](const swarm::GeoPosition &p)
        {
            const double la = p.lat * deg;
            const double lo = p.lon * deg;
            return std::array<double, 3>{std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo), std::sin(la)};
        };
        const auto u = unit(a);
        const auto v = unit(b);
        const double c = std::sqrt((u[0] - v[0]) * (u[0] - v[0]) + (u[1] - v[1]) * (u[1] - v[1]) + (u[2] - v[2]) * (u[2] - v[2]));
        return 2.0 * 6371008.8 * std::asin(std::min(1.0, c / 2.0));
    }

    inline swarm::GeoPosition random_position(Rng &rng)
    {
        return {uniform(rng, -80.0, 80.0), uniform(rng, -179.0, 179.0), coin(rng) ? 0.0 : uniform(rng, 0.0, 500.0)};
    }

    inline swarm::Scenario random_scenario(Rng &rng)
    {
        swarm::Scenario s;
        s.name = "scenario-" + std::to_string(rng() % 100000);
        const swarm::GeoPosition origin{uniform(rng, -60.0, 60.0), uniform(rng, -170.0, 170.0), 0.0};
        const int agents = uniform_int(rng, 1, 6);
        for (int i = 0; i < agents; ++i)
        {
            swarm::AgentSpec a;
            a.id = "a" + std::to_string(i);
            a.start = offset(origin, uniform(rng, -2000, 2000), uniform(rng, -2000, 2000));
            a.start.alt = coin(rng) ? 0.0 : uniform(rng, 0.0, 120.0);
            a.speed = uniform(rng, 1.0, 30.0);
            a.energy_budget = uniform(rng, 100.0, 50000.0);
            a.visibility_radius = uniform(rng, 50.0, 600.0);
            a.arrival_radius = uniform(rng, 1.0, a.visibility_radius);
            s.agents.push_back(a);
        }
        const int targets = uniform_int(rng, 0, 10);
        for (int i = 0; i < targets; ++i)
        {
            swarm::TargetSpec t;
            t.id = "t" + std::to_string(i);
            t.position = offset(origin, uniform(rng, -2000, 2000), uniform(rng, -2000, 2000));
            t.ground_truth = coin(rng) ? swarm::GroundTruth::Casualty : swarm::GroundTruth::NoCasualty;
            t.reward = std::round(uniform(rng, 0.0, 5000.0) * 8.0) / 8.0;
            s.targets.push_back(t);
        }
        const int hazards = uniform_int(rng, 0, 3);
        for (int i = 0; i < hazards; ++i)
        {
            swarm::HazardSpec h;
            h.id = "h" + std::to_string(i);
            h.center = offset(origin, uniform(rng, -2000, 2000), uniform(rng, -2000, 2000));
            h.radius = uniform(rng, 10.0, 400.0);
            h.penalty = uniform(rng, 0.0, 1000.0);
            s.hazards.push_back(h);
        }
        s.mode_config.mode = coin(rng) ? swarm::Mode::Autonomous : swarm::Mode::HumanTeaming;
        s.mode_config.tick_hz = uniform(rng, 1.0, 50.0);
        s.mode_config.time_limit = uniform(rng, 10.0, 3600.0);
        s.mode_config.rng_seed = rng();
        return s;
    }

    // Small allocation instance: agents and tasks on a 1 km patch, costs in
    // meters, rewards comparable to travel costs so IDLE is sometimes optimal.
    inline swarm::AllocationProblem random_problem(Rng &rng, int max_agents = 3, int max_tasks = 3)
    {
        const swarm::GeoPosition origin{50.0, -1.0, 0.0};
        std::vector<swarm::AgentTerm> agents;
        std::vector<swarm::TaskTerm> tasks;
        const int n = uniform_int(rng, 1, max_agents);
        const int m = uniform_int(rng, 0, max_tasks);
        for (int i = 0; i < n; ++i)
            agents.push_back({"a" + std::to_string(i), offset(origin, uniform(rng, 0, 1000), uniform(rng, 0, 1000)), 10.0});
        for (int t = 0; t < m; ++t)
            tasks.push_back({"t" + std::to_string(t), offset(origin, uniform(rng, 0, 1000), uniform(rng, 0, 1000)),
                             uniform(rng, 100.0, 1500.0)});
        return swarm::make_problem(std::move(agents), std::move(tasks),
                                   [](const swarm::AgentTerm &a, const swarm::TaskTerm &t)
                                   { return chord_distance(a.position, t.position); });
    }

    // Exhaustive reference over collision-free assignments honouring the raw
    // Pin/Forbid list. Returns nullopt when nothing is feasible.
    struct OracleResult
    {
        double objective = -std::numeric_limits<double>::infinity();
        std::vector<int> choice; // -1 = IDLE
    };

    inline bool oracle_allows(const swarm::AllocationProblem &p, std::size_t agent, int task)
    {
        for (const auto &c : p.constraints)
        {
            if (const auto *pin = std::get_if<swarm::Pin>(&c.kind))
            {
                if (pin->agent != p.agents[agent].id)
                    continue;
                if (!pin->task ? task != -1 : (task == -1 || p.tasks[task].id != *pin->task))
                    return false;
            }
            else
            {
                const auto &f = std::get<swarm::Forbid>(c.kind);
                if (f.agent == p.agents[agent].id && task != -1 && p.tasks[task].id == f.task)
                    return false;
            }
        }
        return true;
    }

    inline std::optional<OracleResult> oracle_optimum(const swarm::AllocationProblem &p)
    {
        const std::size_t n = p.agents.size();
        const int m = static_cast<int>(p.tasks.size());
        std::optional<OracleResult> best;
        std::vector<int> choice(n, -1);
        std::vector<bool> used(m, false);

        auto recurse = [&](auto &self, std::size_t i, double value) -> void
        {
            if (i == n)
            {
                if (!best || value > best->objective + 1e-9)
                    best = OracleResult{value, choice};
                return;
            }
            for (int t = 0; t <= m; ++t)
            {
                const int task = t == m ? -1 : t;
                if (task >= 0 && used[task])
                    continue;
                if (!oracle_allows(p, i, task))
                    continue;
                choice[i] = task;
                double v = value;
                if (task >= 0)
                {
                    used[task] = true;
                    v += p.tasks[task].reward - p.cost(i, task);
                }
                self(self, i + 1, v);
                if (task >= 0)
                    used[task] = false;
            }
            choice[i] = -1;
        };
        recurse(recurse, 0, 0.0);
        return best;
    }

    // Objective of an allocation computed from scratch; collisions and IDLE
    // follow the same definition as the oracle (collisions should not occur).
    inline double oracle_objective(const swarm::AllocationProblem &p, const swarm::Allocation &a)
    {
        double v = 0.0;
        std::vector<int> count(p.tasks.size(), 0);
        for (std::size_t i = 0; i < p.agents.size(); ++i)
        {
            const auto &task = a.assignment.at(p.agents[i].id);
            if (!task)
                continue;
            for (std::size_t t = 0; t < p.tasks.size(); ++t)
                if (p.tasks[t].id == *task)
                {
                    ++count[t];
                    v -= p.cost(i, t);
                }
        }
        for (std::size_t t = 0; t < p.tasks.size(); ++t)
            if (count[t] == 1)
                v += p.tasks[t].reward;
        return v;
    }

    inline bool has_collision(const swarm::Allocation &a)
    {
        std::vector<std::string> seen;
        for (const auto &[agent, task] : a.assignment)
        {
            if (!task)
                continue;
            if (std::find(seen.begin(), seen.end(), *task) != seen.end())
                return true;
            seen.push_back(*task);
        }
        return false;
    }

    inline int constraint_violations(const swarm::AllocationProblem &p, const swarm::Allocation &a)
    {
        int bad = 0;
        for (std::size_t i = 0; i < p.agents.size(); ++i)
        {
            const auto &task = a.assignment.at(p.agents[i].id);
            int idx = -1;
            if (task)
                for (std::size_t t = 0; t < p.tasks.size(); ++t)
                    if (p.tasks[t].id == *task)
                        idx = static_cast<int>(t);
            if (!oracle_allows(p, i, idx))
                ++bad;
        }
        return bad;
    }

    // Random Pin/Forbid list over existing ids; at most one pin per agent and
    // no two pins on one task, so the set is satisfiable.
    inline std::vector<swarm::OperatorConstraint> random_constraints(Rng &rng, const swarm::AllocationProblem &p)
    {
        std::vector<swarm::OperatorConstraint> out;
        std::vector<bool> task_pinned(p.tasks.size(), false);
        for (const auto &agent : p.agents)
        {
            const int roll = uniform_int(rng, 0, 3);
            if (roll == 0 && !p.tasks.empty())
            {
                const auto t = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(p.tasks.size()) - 1));
                if (!task_pinned[t])
                {
                    task_pinned[t] = true;
                    out.push_back({swarm::Pin{agent.id, p.tasks[t].id}, swarm::ConstraintSource::ManualReassign});
                }
            }
            else if (roll == 1)
            {
                out.push_back({swarm::Pin{agent.id, std::nullopt}, swarm::ConstraintSource::Preference});
            }
            else if (roll == 2 && !p.tasks.empty())
            {
                const int forbids = uniform_int(rng, 1, static_cast<int>(p.tasks.size()));
                for (int k = 0; k < forbids; ++k)
                {
                    const auto t = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(p.tasks.size()) - 1));
                    out.push_back({swarm::Forbid{agent.id, p.tasks[t].id}, swarm::ConstraintSource::Preference});
                }
            }
        }
        return out;
    }
}
