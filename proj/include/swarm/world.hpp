#pragma once

#include "swarm/allocation.hpp"
#include "swarm/geo.hpp"
#include "swarm/perception.hpp"
#include "swarm/scenario.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace swarm
{
    struct AgentRuntime
    {
        std::string id;
        GeoPosition position;
        double remaining_energy = 0.0;
        bool depleted = false;
        std::optional<std::string> current_task;
        std::vector<std::string> schedule; // current task first, then planned

        bool operator==(const AgentRuntime &) const = default;
    };

    struct TargetRuntime
    {
        std::string id;
        std::optional<ClassificationEvent> classification; // empty while Unknown

        bool unknown() const noexcept { return !classification.has_value(); }
        bool operator==(const TargetRuntime &) const = default;
    };

    struct ScoreTally
    {
        std::uint64_t classifications = 0;
        std::uint64_t correct = 0;
        double elapsed = 0.0; // seconds

        bool operator==(const ScoreTally &) const = default;
    };

    // Live simulation state. Agents and targets are kept in scenario order.
    struct WorldState
    {
        std::shared_ptr<const Scenario> scenario;
        EnergyModel energy_model;

        std::uint64_t tick = 0;
        double sim_time = 0.0;
        std::vector<AgentRuntime> agents;
        std::vector<TargetRuntime> targets;
        Allocation allocation;
        std::vector<OperatorConstraint> constraints;
        Mode mode = Mode::Autonomous;
        bool paused = false;
        ScoreTally tally;
        std::uint64_t rng_seed = 0;

        // Set whenever the unresolved-target set or the constraint set changes.
        bool allocation_dirty = false;

        const AgentSpec &agent_spec(std::size_t i) const { return scenario->agents[i]; }
        const TargetSpec &target_spec(std::size_t i) const { return scenario->targets[i]; }
        std::optional<std::size_t> agent_index(std::string_view id) const;
        std::optional<std::size_t> target_index(std::string_view id) const;
        std::size_t unknown_targets() const;
    };

    WorldState make_world(std::shared_ptr<const Scenario> scenario, EnergyModel energy = {});
}
