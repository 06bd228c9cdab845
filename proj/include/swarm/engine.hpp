#pragma once

#include "swarm/world.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace swarm
{
    inline constexpr const char *kEngineVersion = "swarmteam-engine/1";

    struct ClassifyCommand
    {
        Actor actor;
        std::string target;
        GroundTruth label = GroundTruth::Casualty;

        bool operator==(const ClassifyCommand &) const = default;
    };

    // An empty target sends the agent to IDLE.
    struct ReassignCommand
    {
        std::string agent;
        std::optional<std::string> target;

        bool operator==(const ReassignCommand &) const = default;
    };

    struct SetModeCommand
    {
        Mode mode = Mode::Autonomous;

        bool operator==(const SetModeCommand &) const = default;
    };

    struct PauseCommand
    {
        bool operator==(const PauseCommand &) const = default;
    };

    struct ResumeCommand
    {
        bool operator==(const ResumeCommand &) const = default;
    };

    using CommandBody = std::variant<ClassifyCommand, ReassignCommand, SetModeCommand, PauseCommand, ResumeCommand>;

    struct Command
    {
        CommandBody body;
        std::string issued_by;
        std::uint64_t seq = 0;

        bool operator==(const Command &) const = default;
    };

    enum class RejectReason : std::uint8_t
    {
        ModeForbids,
        AlreadyClassified,
        NoFeedAvailable,
        UnknownTarget,
        UnknownAgent,
        InfeasibleConstraint,
    };

    std::string_view to_string(RejectReason r) noexcept;

    struct CommandOutcome
    {
        std::uint64_t seq = 0;
        std::string issued_by;
        std::optional<RejectReason> rejected; // empty when accepted
        nlohmann::json command;
    };

    struct TickReport
    {
        std::uint64_t tick = 0; // tick index this report covers
        double sim_time = 0.0;  // time after the tick
        bool advanced = false;  // false while paused or finished
        std::vector<CommandOutcome> outcomes;
        std::vector<nlohmann::json> events;
    };

    struct EngineParams
    {
        int max_sum_iters = 100;
        double max_sum_damping = 0.5;
    };

    // Applies commands in seq order, moves agents, resolves arrivals and
    // rebuilds the allocation whenever the task or constraint set changed.
    // Command failures become rejections; they never abort the tick.
    TickReport tick(WorldState &world, double dt, std::span<const Command> pending, const EngineParams &params = {});

    // Changes only the mode.
    void set_mode(WorldState &world, Mode mode);

    // Recomputes allocation and planned schedules from the current state.
    void reallocate(WorldState &world, const EngineParams &params = {});

    // All targets classified or time limit reached.
    bool run_complete(const WorldState &world);

    class ZeroElapsed : public std::domain_error
    {
    public:
        ZeroElapsed() : std::domain_error("ZeroElapsed: score needs elapsed time > 0") {}
    };

    struct Score
    {
        double rate = 0.0;     // classifications per minute
        double accuracy = 0.0; // correct / classifications
        double score = 0.0;    // rate * accuracy

        bool operator==(const Score &) const = default;
    };

    Score compute_score(const ScoreTally &tally);

    // Operator-facing view. Ground truth of Unknown targets never appears.
    nlohmann::json operator_snapshot(const WorldState &world, bool include_images = true);

    // Idealised operator: classifies any feed at clarity >= threshold with the
    // right label.
    struct HumanPolicy
    {
        double threshold = 0.7;
        std::string client_id = "scripted-human";

        std::vector<Command> decide(const WorldState &world) const;
    };

    class CommandFormatError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    nlohmann::json to_json(const Command &c);
    nlohmann::json to_json(const ScoreTally &t);
    ScoreTally tally_from_json(const nlohmann::json &j);

    // Parses a wire command. issued_by and seq are taken from the frame when
    // present. Throws CommandFormatError.
    Command command_from_json(const nlohmann::json &j);

    // Classify commands from a client are treated as that client's own call.
    Command command_from_client_frame(const nlohmann::json &frame, const std::string &client_id);

    // WorldState plus its tick clock, for callers that drive runs step by step.
    class Engine
    {
    public:
        explicit Engine(Scenario scenario, EngineParams params = {});

        TickReport step(std::span<const Command> pending);
        const WorldState &world() const noexcept { return m_world; }
        const Scenario &scenario() const noexcept { return *m_world.scenario; }
        double dt() const noexcept { return 1.0 / m_world.scenario->mode_config.tick_hz; }
        bool complete() const { return run_complete(m_world); }
        void set_paused(bool paused) noexcept { m_world.paused = paused; }

    private:
        WorldState m_world;
        EngineParams m_params;
    };
}
