#pragma once

#include "swarm/scenario.hpp"

#include <json.hpp>

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace swarm
{
    struct WorldState;

    struct AgentTerm
    {
        std::string id;
        GeoPosition position;
        double speed = 0.0;
    };

    struct TaskTerm
    {
        std::string id;
        GeoPosition position;
        double reward = 0.0;
    };

    // Restricts an agent to a single choice; an empty task pins it to IDLE.
    struct Pin
    {
        std::string agent;
        std::optional<std::string> task;

        bool operator==(const Pin &) const = default;
    };

    struct Forbid
    {
        std::string agent;
        std::string task;

        bool operator==(const Forbid &) const = default;
    };

    enum class ConstraintSource : std::uint8_t
    {
        ManualReassign,
        Preference,
    };

    struct OperatorConstraint
    {
        std::variant<Pin, Forbid> kind;
        ConstraintSource source = ConstraintSource::Preference;

        bool operator==(const OperatorConstraint &) const = default;
    };

    // Choices are task indices; index tasks.size() stands for IDLE.
    using Domain = std::vector<std::size_t>;

    struct AllocationProblem
    {
        std::vector<AgentTerm> agents;
        std::vector<TaskTerm> tasks;
        std::vector<double> costs; // row-major, agents x tasks
        std::vector<OperatorConstraint> constraints;
        // Filled by apply_constraints. Ascending, IDLE last when present.
        std::vector<Domain> domains;

        std::size_t idle() const noexcept { return tasks.size(); }
        double cost(std::size_t agent, std::size_t task) const { return costs[agent * tasks.size() + task]; }
    };

    AllocationProblem make_problem(std::vector<AgentTerm> agents, std::vector<TaskTerm> tasks,
                                   const std::function<double(const AgentTerm &, const TaskTerm &)> &cost,
                                   std::vector<OperatorConstraint> constraints = {});

    struct Allocation
    {
        // nullopt means IDLE.
        std::map<std::string, std::optional<std::string>> assignment;
        double objective = 0.0;

        bool operator==(const Allocation &) const = default;
    };

    enum class AllocationErrorKind : std::uint8_t
    {
        ConstraintRefError,
        InfeasibleConstraint,
        InfeasibleAllocation,
        TooLarge,
    };

    std::string_view to_string(AllocationErrorKind k) noexcept;

    class AllocationError : public std::runtime_error
    {
    public:
        AllocationError(AllocationErrorKind kind, const std::string &detail);
        AllocationErrorKind kind() const noexcept { return m_kind; }

    private:
        AllocationErrorKind m_kind;
    };

    // One task per Unknown target, costed from each agent's current position.
    // Agents and tasks are sorted by id, which fixes the tie-break order.
    AllocationProblem build_problem(const WorldState &world, const std::vector<OperatorConstraint> &constraints);

    AllocationProblem apply_constraints(AllocationProblem problem);

    // Penalty charged when two or more agents pick the same task.
    double collision_penalty(const AllocationProblem &problem);

    // sum reward[exactly one] - P[more than one] - sum cost. Throws
    // InfeasibleAllocation for duplicates, missing agents or constraint breaches.
    double allocation_objective(const AllocationProblem &problem, const Allocation &alloc);

    Allocation run_max_sum(const AllocationProblem &problem, int max_iters = 100, double damping = 0.5);

    // Exhaustive optimum; throws TooLarge when (tasks + 1)^agents > 1e6.
    Allocation brute_force_allocation(const AllocationProblem &problem);

    // Baseline: repeatedly commits the globally cheapest profitable free pair.
    Allocation greedy_nearest_allocation(const AllocationProblem &problem);

    // Synchronous damped max-sum over the agent/task factor graph. Exposed for
    // tooling and tests; run_max_sum is the usual entry point.
    class MaxSumSolver
    {
    public:
        struct Options
        {
            int max_iters = 100;
            double damping = 0.5;
            double tolerance = 1e-9;
        };

        MaxSumSolver(const AllocationProblem &problem, Options options);

        // One synchronous round; returns the largest absolute message change.
        double iterate();
        // Iterates until convergence or max_iters.
        void solve();

        // Per-agent argmax of unary utility plus incoming task messages.
        std::vector<std::size_t> decode() const;
        // Greedy collision repair of a decoded choice vector.
        std::vector<std::size_t> repair(std::vector<std::size_t> choice) const;
        Allocation allocation() const;

        int iterations() const noexcept { return m_iterations; }
        bool converged() const noexcept { return m_converged; }
        const std::vector<double> &residuals() const noexcept { return m_residuals; }
        const AllocationProblem &problem() const noexcept { return m_problem; }

        // Message tables indexed over the agent's domain.
        std::vector<double> &task_to_agent(std::size_t task, std::size_t agent) { return m_r[task * m_agents + agent]; }
        std::vector<double> &agent_to_task(std::size_t agent, std::size_t task) { return m_q[task * m_agents + agent]; }

        // Graph structure and current messages as JSON, for test tooling.
        nlohmann::json dump() const;

    private:
        double unary(std::size_t agent, std::size_t choice) const;

        AllocationProblem m_problem;
        Options m_options;
        std::size_t m_agents;
        std::size_t m_tasks;
        std::vector<std::vector<double>> m_q; // agent -> task factor
        std::vector<std::vector<double>> m_r; // task factor -> agent
        std::vector<double> m_residuals;
        int m_iterations = 0;
        bool m_converged = false;
    };

    // Conversions between choice vectors (indices) and id-keyed allocations.
    Allocation to_allocation(const AllocationProblem &problem, const std::vector<std::size_t> &choice);
    std::vector<std::size_t> to_choices(const AllocationProblem &problem, const Allocation &alloc);

    nlohmann::json to_json(const OperatorConstraint &c);
    nlohmann::json to_json(const Allocation &a);
}
