#include "swarm/allocation.hpp"
#include "swarm/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace swarm
{
    using nlohmann::json;

    namespace
    {
        constexpr double kNegInf = -std::numeric_limits<double>::infinity();
        constexpr double kBruteForceLimit = 1e6;

        std::optional<std::size_t> find_agent(const AllocationProblem &p, std::string_view id)
        {
            for (std::size_t i = 0; i < p.agents.size(); ++i)
                if (p.agents[i].id == id)
                    return i;
            return std::nullopt;
        }

        std::optional<std::size_t> find_task(const AllocationProblem &p, std::string_view id)
        {
            for (std::size_t t = 0; t < p.tasks.size(); ++t)
                if (p.tasks[t].id == id)
                    return t;
            return std::nullopt;
        }

        [[noreturn]] void fail(AllocationErrorKind kind, const std::string &detail)
        {
            throw AllocationError(kind, detail);
        }

        std::size_t require_agent(const AllocationProblem &p, const std::string &id)
        {
            auto i = find_agent(p, id);
            if (!i)
                fail(AllocationErrorKind::ConstraintRefError, "constraint references unknown agent '" + id + "'");
            return *i;
        }

        std::size_t require_task(const AllocationProblem &p, const std::string &id)
        {
            auto t = find_task(p, id);
            if (!t)
                fail(AllocationErrorKind::ConstraintRefError, "constraint references unknown task '" + id + "'");
            return *t;
        }

        void check_refs(const AllocationProblem &p)
        {
            for (const auto &c : p.constraints)
            {
                if (const auto *pin = std::get_if<Pin>(&c.kind))
                {
                    require_agent(p, pin->agent);
                    if (pin->task)
                        require_task(p, *pin->task);
                }
                else
                {
                    const auto &f = std::get<Forbid>(c.kind);
                    require_agent(p, f.agent);
                    require_task(p, f.task);
                }
            }
        }

        // Objective on a choice vector without feasibility checks.
        double evaluate(const AllocationProblem &p, const std::vector<std::size_t> &choice)
        {
            const double penalty = collision_penalty(p);
            std::vector<int> takers(p.tasks.size(), 0);
            double value = 0.0;
            for (std::size_t i = 0; i < choice.size(); ++i)
            {
                if (choice[i] == p.idle())
                    continue;
                ++takers[choice[i]];
                value -= p.cost(i, choice[i]);
            }
            for (std::size_t t = 0; t < p.tasks.size(); ++t)
            {
                if (takers[t] == 1)
                    value += p.tasks[t].reward;
                else if (takers[t] > 1)
                    value -= penalty;
            }
            return value;
        }

        bool has_collision(const AllocationProblem &p, const std::vector<std::size_t> &choice)
        {
            std::vector<bool> taken(p.tasks.size(), false);
            for (auto c : choice)
            {
                if (c == p.idle())
                    continue;
                if (taken[c])
                    return true;
                taken[c] = true;
            }
            return false;
        }

        double normalize(std::vector<double> &m)
        {
            if (m.empty())
                return 0.0;
            const double top = *std::max_element(m.begin(), m.end());
            for (auto &v : m)
                v -= top;
            return top;
        }
    }

    std::string_view to_string(AllocationErrorKind k) noexcept
    {
        switch (k)
        {
        case AllocationErrorKind::ConstraintRefError:
            return "ConstraintRefError";
        case AllocationErrorKind::InfeasibleConstraint:
            return "InfeasibleConstraint";
        case AllocationErrorKind::InfeasibleAllocation:
            return "InfeasibleAllocation";
        case AllocationErrorKind::TooLarge:
            return "TooLarge";
        }
        return "?";
    }

    AllocationError::AllocationError(AllocationErrorKind kind, const std::string &detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail), m_kind(kind)
    {
    }

    AllocationProblem make_problem(std::vector<AgentTerm> agents, std::vector<TaskTerm> tasks,
                                   const std::function<double(const AgentTerm &, const TaskTerm &)> &cost,
                                   std::vector<OperatorConstraint> constraints)
    {
        AllocationProblem p;
        p.agents = std::move(agents);
        p.tasks = std::move(tasks);
        p.constraints = std::move(constraints);
        p.costs.reserve(p.agents.size() * p.tasks.size());
        for (const auto &a : p.agents)
            for (const auto &t : p.tasks)
                p.costs.push_back(cost(a, t));
        return p;
    }

    AllocationProblem build_problem(const WorldState &world, const std::vector<OperatorConstraint> &constraints)
    {
        std::vector<AgentTerm> agents;
        for (std::size_t i = 0; i < world.agents.size(); ++i)
            agents.push_back(AgentTerm{world.agents[i].id, world.agents[i].position, world.agent_spec(i).speed});

        std::vector<TaskTerm> tasks;
        for (std::size_t t = 0; t < world.targets.size(); ++t)
        {
            if (!world.targets[t].unknown())
                continue;
            const auto &spec = world.target_spec(t);
            tasks.push_back(TaskTerm{spec.id, spec.position, spec.reward});
        }

        auto by_id = [](const auto &a, const auto &b) { return a.id < b.id; };
        std::sort(agents.begin(), agents.end(), by_id);
        std::sort(tasks.begin(), tasks.end(), by_id);

        const auto &hazards = world.scenario->hazards;
        AllocationProblem p = make_problem(
            std::move(agents), std::move(tasks),
            [&](const AgentTerm &a, const TaskTerm &t)
            { return energy_cost(a.position, t.position, hazards, world.energy_model); },
            constraints);
        check_refs(p);
        return p;
    }

    AllocationProblem apply_constraints(AllocationProblem problem)
    {
        check_refs(problem);
        const std::size_t n = problem.agents.size();
        const std::size_t m = problem.tasks.size();
        const std::size_t idle = problem.idle();

        std::vector<std::optional<std::size_t>> pinned(n);
        std::vector<std::optional<std::size_t>> pin_owner(m);
        std::set<std::pair<std::size_t, std::size_t>> forbidden;

        for (const auto &c : problem.constraints)
        {
            if (const auto *pin = std::get_if<Pin>(&c.kind))
            {
                const std::size_t a = require_agent(problem, pin->agent);
                const std::size_t choice = pin->task ? require_task(problem, *pin->task) : idle;
                if (pinned[a] && *pinned[a] != choice)
                    fail(AllocationErrorKind::InfeasibleConstraint, "agent '" + pin->agent + "' pinned to two choices");
                pinned[a] = choice;
                if (choice != idle)
                {
                    if (pin_owner[choice] && *pin_owner[choice] != a)
                        fail(AllocationErrorKind::InfeasibleConstraint,
                             "task '" + *pin->task + "' pinned to more than one agent");
                    pin_owner[choice] = a;
                }
            }
            else
            {
                const auto &f = std::get<Forbid>(c.kind);
                forbidden.emplace(require_agent(problem, f.agent), require_task(problem, f.task));
            }
        }

        problem.domains.assign(n, {});
        for (std::size_t a = 0; a < n; ++a)
        {
            if (pinned[a])
            {
                if (*pinned[a] != idle && forbidden.contains({a, *pinned[a]}))
                    fail(AllocationErrorKind::InfeasibleConstraint,
                         "agent '" + problem.agents[a].id + "' is both pinned to and forbidden from a task");
                problem.domains[a] = {*pinned[a]};
                continue;
            }
            for (std::size_t t = 0; t < m; ++t)
            {
                if (pin_owner[t] || forbidden.contains({a, t}))
                    continue;
                problem.domains[a].push_back(t);
            }
            problem.domains[a].push_back(idle);
        }
        return problem;
    }

    double collision_penalty(const AllocationProblem &problem)
    {
        double max_reward = 0.0;
        for (const auto &t : problem.tasks)
            max_reward = std::max(max_reward, t.reward);
        double max_cost = 0.0;
        for (double c : problem.costs)
            max_cost = std::max(max_cost, c);
        return 10.0 * (max_reward + max_cost);
    }

    std::vector<std::size_t> to_choices(const AllocationProblem &problem, const Allocation &alloc)
    {
        std::vector<std::size_t> choice(problem.agents.size(), problem.idle());
        if (alloc.assignment.size() != problem.agents.size())
            fail(AllocationErrorKind::InfeasibleAllocation, "allocation must name every agent exactly once");
        for (const auto &[agent, task] : alloc.assignment)
        {
            auto a = find_agent(problem, agent);
            if (!a)
                fail(AllocationErrorKind::InfeasibleAllocation, "unknown agent '" + agent + "'");
            if (task)
            {
                auto t = find_task(problem, *task);
                if (!t)
                    fail(AllocationErrorKind::InfeasibleAllocation, "unknown task '" + *task + "'");
                choice[*a] = *t;
            }
        }
        return choice;
    }

    Allocation to_allocation(const AllocationProblem &problem, const std::vector<std::size_t> &choice)
    {
        Allocation out;
        for (std::size_t i = 0; i < problem.agents.size(); ++i)
        {
            std::optional<std::string> task;
            if (choice[i] != problem.idle())
                task = problem.tasks[choice[i]].id;
            out.assignment.emplace(problem.agents[i].id, std::move(task));
        }
        out.objective = evaluate(problem, choice);
        return out;
    }

    double allocation_objective(const AllocationProblem &problem, const Allocation &alloc)
    {
        const auto constrained = apply_constraints(problem);
        const auto choice = to_choices(constrained, alloc);
        if (has_collision(constrained, choice))
            fail(AllocationErrorKind::InfeasibleAllocation, "a task is assigned to more than one agent");
        for (std::size_t i = 0; i < choice.size(); ++i)
        {
            const auto &d = constrained.domains[i];
            if (std::find(d.begin(), d.end(), choice[i]) == d.end())
                fail(AllocationErrorKind::InfeasibleAllocation,
                     "assignment of agent '" + constrained.agents[i].id + "' violates a constraint");
        }
        return evaluate(constrained, choice);
    }

    Allocation brute_force_allocation(const AllocationProblem &problem)
    {
        const std::size_t n = problem.agents.size();
        const double bound = std::pow(static_cast<double>(problem.tasks.size() + 1), static_cast<double>(n));
        if (bound > kBruteForceLimit)
            fail(AllocationErrorKind::TooLarge, "enumeration bound " + std::to_string(bound) + " exceeds 1e6");

        const auto p = apply_constraints(problem);
        std::vector<std::size_t> digit(n, 0);
        std::vector<std::size_t> choice(n);
        std::optional<std::vector<std::size_t>> best;
        double best_value = kNegInf;

        // Odometer over domains, agent 0 most significant: lexicographic order.
        while (true)
        {
            for (std::size_t i = 0; i < n; ++i)
                choice[i] = p.domains[i][digit[i]];
            if (!has_collision(p, choice))
            {
                const double v = evaluate(p, choice);
                if (!best || v > best_value)
                {
                    best = choice;
                    best_value = v;
                }
            }
            bool exhausted = true;
            for (std::size_t k = n; k-- > 0;)
            {
                if (++digit[k] < p.domains[k].size())
                {
                    exhausted = false;
                    break;
                }
                digit[k] = 0;
            }
            if (exhausted)
                break;
        }
        if (!best)
            fail(AllocationErrorKind::InfeasibleConstraint, "no collision-free assignment exists");
        return to_allocation(p, *best);
    }

    Allocation greedy_nearest_allocation(const AllocationProblem &problem)
    {
        const auto p = apply_constraints(problem);
        const std::size_t n = p.agents.size();
        const std::size_t idle = p.idle();
        std::vector<std::size_t> choice(n, idle);
        std::vector<bool> decided(n, false);
        std::vector<bool> taken(p.tasks.size(), false);

        for (std::size_t i = 0; i < n; ++i)
        {
            if (p.domains[i].size() == 1)
            {
                choice[i] = p.domains[i].front();
                decided[i] = true;
                if (choice[i] != idle)
                    taken[choice[i]] = true;
            }
        }
        while (true)
        {
            std::optional<std::pair<std::size_t, std::size_t>> pick;
            double pick_cost = 0.0;
            for (std::size_t i = 0; i < n; ++i)
            {
                if (decided[i])
                    continue;
                for (auto t : p.domains[i])
                {
                    if (t == idle || taken[t] || p.tasks[t].reward <= p.cost(i, t))
                        continue;
                    if (!pick || p.cost(i, t) < pick_cost)
                    {
                        pick = {i, t};
                        pick_cost = p.cost(i, t);
                    }
                }
            }
            if (!pick)
                break;
            choice[pick->first] = pick->second;
            decided[pick->first] = true;
            taken[pick->second] = true;
        }
        return to_allocation(p, choice);
    }

    MaxSumSolver::MaxSumSolver(const AllocationProblem &problem, Options options)
        : m_problem(apply_constraints(problem)),
          m_options(options),
          m_agents(m_problem.agents.size()),
          m_tasks(m_problem.tasks.size())
    {
        m_q.resize(m_agents * m_tasks);
        m_r.resize(m_agents * m_tasks);
        for (std::size_t t = 0; t < m_tasks; ++t)
        {
            for (std::size_t i = 0; i < m_agents; ++i)
            {
                m_q[t * m_agents + i].assign(m_problem.domains[i].size(), 0.0);
                m_r[t * m_agents + i].assign(m_problem.domains[i].size(), 0.0);
            }
        }
    }

    double MaxSumSolver::unary(std::size_t agent, std::size_t choice) const
    {
        return choice == m_problem.idle() ? 0.0 : -m_problem.cost(agent, choice);
    }

    double MaxSumSolver::iterate()
    {
        const double reward_penalty = collision_penalty(m_problem);
        const auto &domains = m_problem.domains;

        // Variable -> factor: unary utility plus every other factor's message.
        std::vector<std::vector<double>> q_new(m_q.size());
        for (std::size_t i = 0; i < m_agents; ++i)
        {
            const auto &dom = domains[i];
            std::vector<double> total(dom.size());
            for (std::size_t k = 0; k < dom.size(); ++k)
            {
                total[k] = unary(i, dom[k]);
                for (std::size_t t = 0; t < m_tasks; ++t)
                    total[k] += m_r[t * m_agents + i][k];
            }
            for (std::size_t t = 0; t < m_tasks; ++t)
            {
                auto &msg = q_new[t * m_agents + i];
                msg.resize(dom.size());
                const auto &incoming = m_r[t * m_agents + i];
                for (std::size_t k = 0; k < dom.size(); ++k)
                    msg[k] = total[k] - incoming[k];
                normalize(msg);
            }
        }

        // Factor -> variable. The coordination factor only depends on how many
        // agents pick its task, so maximise over a count capped at two.
        std::vector<std::vector<double>> r_new(m_r.size());
        for (std::size_t t = 0; t < m_tasks; ++t)
        {
            const double reward = m_problem.tasks[t].reward;
            std::vector<double> pick(m_agents, kNegInf);
            std::vector<double> skip(m_agents, kNegInf);
            for (std::size_t j = 0; j < m_agents; ++j)
            {
                const auto &dom = domains[j];
                const auto &msg = m_q[t * m_agents + j];
                for (std::size_t k = 0; k < dom.size(); ++k)
                {
                    if (dom[k] == t)
                        pick[j] = msg[k];
                    else
                        skip[j] = std::max(skip[j], msg[k]);
                }
            }
            for (std::size_t i = 0; i < m_agents; ++i)
            {
                double count[3] = {0.0, kNegInf, kNegInf};
                for (std::size_t j = 0; j < m_agents; ++j)
                {
                    if (j == i)
                        continue;
                    const double none = count[0] + skip[j];
                    const double one = std::max(count[1] + skip[j], count[0] + pick[j]);
                    const double many = std::max(count[2] + std::max(skip[j], pick[j]), count[1] + pick[j]);
                    count[0] = none;
                    count[1] = one;
                    count[2] = many;
                }
                const double take =
                    std::max({reward + count[0], -reward_penalty + count[1], -reward_penalty + count[2]});
                const double leave = std::max({count[0], reward + count[1], -reward_penalty + count[2]});

                const auto &dom = domains[i];
                auto &msg = r_new[t * m_agents + i];
                msg.resize(dom.size());
                for (std::size_t k = 0; k < dom.size(); ++k)
                    msg[k] = dom[k] == t ? take : leave;
                normalize(msg);
            }
        }

        // Damped blend with the previous round, renormalised.
        const double d = m_options.damping;
        double residual = 0.0;
        auto blend = [&](std::vector<double> &old_msg, const std::vector<double> &fresh)
        {
            std::vector<double> next(fresh.size());
            for (std::size_t k = 0; k < fresh.size(); ++k)
                next[k] = d * old_msg[k] + (1.0 - d) * fresh[k];
            normalize(next);
            for (std::size_t k = 0; k < fresh.size(); ++k)
                residual = std::max(residual, std::abs(next[k] - old_msg[k]));
            old_msg = std::move(next);
        };
        for (std::size_t e = 0; e < m_q.size(); ++e)
            blend(m_q[e], q_new[e]);
        for (std::size_t e = 0; e < m_r.size(); ++e)
            blend(m_r[e], r_new[e]);

        ++m_iterations;
        m_residuals.push_back(residual);
        return residual;
    }

    void MaxSumSolver::solve()
    {
        while (m_iterations < m_options.max_iters)
        {
            if (iterate() < m_options.tolerance)
            {
                m_converged = true;
                break;
            }
        }
    }

    constexpr double kTieTolerance = 1e-6;

    std::vector<std::size_t> MaxSumSolver::decode() const
    {
        std::vector<std::size_t> choice(m_agents, m_problem.idle());
        for (std::size_t i = 0; i < m_agents; ++i)
        {
            const auto &dom = m_problem.domains[i];
            double best = kNegInf;
            for (std::size_t k = 0; k < dom.size(); ++k)
            {
                double belief = unary(i, dom[k]);
                for (std::size_t t = 0; t < m_tasks; ++t)
                    belief += m_r[t * m_agents + i][k];
                // Converged messages leave ties off by rounding noise; those
                // still go to the earlier choice.
                if (belief > best + kTieTolerance)
                {
                    best = belief;
                    choice[i] = dom[k];
                }
            }
        }
        return choice;
    }

    std::vector<std::size_t> MaxSumSolver::repair(std::vector<std::size_t> choice) const
    {
        const std::size_t idle = m_problem.idle();
        for (std::size_t t = 0; t < m_tasks; ++t)
        {
            std::vector<std::size_t> takers;
            for (std::size_t i = 0; i < m_agents; ++i)
                if (choice[i] == t)
                    takers.push_back(i);
            if (takers.size() < 2)
                continue;

            // Cheapest agent keeps the task.
            std::size_t keeper = takers.front();
            for (auto i : takers)
                if (m_problem.cost(i, t) < m_problem.cost(keeper, t))
                    keeper = i;

            for (auto i : takers)
            {
                if (i == keeper)
                    continue;
                std::vector<bool> taken(m_tasks, false);
                for (std::size_t j = 0; j < m_agents; ++j)
                    if (j != i && choice[j] != idle)
                        taken[choice[j]] = true;

                std::size_t best_choice = idle;
                double best_gain = kNegInf;
                for (auto c : m_problem.domains[i])
                {
                    if (c != idle && taken[c])
                        continue;
                    const double gain = c == idle ? 0.0 : m_problem.tasks[c].reward - m_problem.cost(i, c);
                    if (gain > best_gain)
                    {
                        best_gain = gain;
                        best_choice = c;
                    }
                }
                choice[i] = best_choice;
            }
        }
        return choice;
    }

    Allocation MaxSumSolver::allocation() const
    {
        return to_allocation(m_problem, repair(decode()));
    }

    json MaxSumSolver::dump() const
    {
        auto choice_name = [&](std::size_t c) -> std::string
        { return c == m_problem.idle() ? "IDLE" : m_problem.tasks[c].id; };

        json variables = json::array();
        for (std::size_t i = 0; i < m_agents; ++i)
        {
            json domain = json::array();
            for (auto c : m_problem.domains[i])
                domain.push_back(choice_name(c));
            variables.push_back({{"agent", m_problem.agents[i].id}, {"domain", std::move(domain)}});
        }
        json factors = json::array();
        for (std::size_t i = 0; i < m_agents; ++i)
            factors.push_back({{"id", "cost:" + m_problem.agents[i].id},
                               {"kind", "unary"},
                               {"scope", json::array({m_problem.agents[i].id})}});
        json messages = json::array();
        for (std::size_t t = 0; t < m_tasks; ++t)
        {
            json scope = json::array();
            for (const auto &a : m_problem.agents)
                scope.push_back(a.id);
            factors.push_back({{"id", "task:" + m_problem.tasks[t].id},
                               {"kind", "coordination"},
                               {"reward", m_problem.tasks[t].reward},
                               {"scope", std::move(scope)}});
            for (std::size_t i = 0; i < m_agents; ++i)
            {
                messages.push_back({{"from", m_problem.agents[i].id},
                                    {"to", "task:" + m_problem.tasks[t].id},
                                    {"values", m_q[t * m_agents + i]}});
                messages.push_back({{"from", "task:" + m_problem.tasks[t].id},
                                    {"to", m_problem.agents[i].id},
                                    {"values", m_r[t * m_agents + i]}});
            }
        }
        return json{{"variables", std::move(variables)},
                    {"factors", std::move(factors)},
                    {"messages", std::move(messages)},
                    {"penalty", collision_penalty(m_problem)},
                    {"iterations", m_iterations},
                    {"converged", m_converged},
                    {"residuals", m_residuals}};
    }

    Allocation run_max_sum(const AllocationProblem &problem, int max_iters, double damping)
    {
        MaxSumSolver solver(problem, MaxSumSolver::Options{max_iters, damping, 1e-9});
        solver.solve();
        return solver.allocation();
    }

    json to_json(const OperatorConstraint &c)
    {
        json j;
        if (const auto *pin = std::get_if<Pin>(&c.kind))
        {
            j = {{"kind", "Pin"}, {"agent", pin->agent}};
            j["task"] = pin->task ? json(*pin->task) : json(nullptr);
        }
        else
        {
            const auto &f = std::get<Forbid>(c.kind);
            j = {{"kind", "Forbid"}, {"agent", f.agent}, {"task", f.task}};
        }
        j["source"] = c.source == ConstraintSource::ManualReassign ? "ManualReassign" : "Preference";
        return j;
    }

    json to_json(const Allocation &a)
    {
        json assignment = json::object();
        for (const auto &[agent, task] : a.assignment)
            assignment[agent] = task ? json(*task) : json(nullptr);
        return json{{"assignment", std::move(assignment)}, {"objective", a.objective}};
    }
}
