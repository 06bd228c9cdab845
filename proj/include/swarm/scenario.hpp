#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace swarm
{
    struct GeoPosition
    {
        double lat = 0.0; // degrees, [-90, 90]
        double lon = 0.0; // degrees, [-180, 180]
        double alt = 0.0; // meters, >= 0

        bool operator==(const GeoPosition &) const = default;
    };

    enum class GroundTruth : std::uint8_t
    {
        Casualty,
        NoCasualty,
    };

    enum class Mode : std::uint8_t
    {
        Autonomous,
        HumanTeaming,
    };

    std::string_view to_string(GroundTruth g) noexcept;
    std::string_view to_string(Mode m) noexcept;
    // Throws std::invalid_argument on an unrecognised name.
    GroundTruth ground_truth_from_string(std::string_view s);
    Mode mode_from_string(std::string_view s);

    inline constexpr double kDefaultVisibilityRadius = 300.0;
    inline constexpr double kDefaultArrivalRadius = 10.0;
    inline constexpr double kDefaultReward = 1000.0;
    inline constexpr double kDefaultTickHz = 10.0;
    inline constexpr double kDefaultTimeLimit = 600.0;

    struct AgentSpec
    {
        std::string id;
        GeoPosition start;
        double speed = 0.0;         // m/s
        double energy_budget = 0.0; // energy units
        double visibility_radius = kDefaultVisibilityRadius;
        double arrival_radius = kDefaultArrivalRadius;

        bool operator==(const AgentSpec &) const = default;
    };

    struct TargetSpec
    {
        std::string id;
        GeoPosition position;
        GroundTruth ground_truth = GroundTruth::Casualty;
        double reward = kDefaultReward;

        bool operator==(const TargetSpec &) const = default;
    };

    struct HazardSpec
    {
        std::string id;
        GeoPosition center;
        double radius = 0.0;  // meters
        double penalty = 0.0; // energy units per crossing

        bool operator==(const HazardSpec &) const = default;
    };

    struct ModeConfig
    {
        Mode mode = Mode::Autonomous;
        double tick_hz = kDefaultTickHz;
        double time_limit = kDefaultTimeLimit; // seconds
        std::uint64_t rng_seed = 0;

        bool operator==(const ModeConfig &) const = default;
    };

    struct Scenario
    {
        std::string name;
        std::vector<AgentSpec> agents;
        std::vector<TargetSpec> targets;
        std::vector<HazardSpec> hazards;
        ModeConfig mode_config;

        bool operator==(const Scenario &) const = default;
    };

    enum class ScenarioErrorKind : std::uint8_t
    {
        MalformedJson,
        SchemaViolation,
        InvariantViolation,
    };

    std::string_view to_string(ScenarioErrorKind k) noexcept;

    // Every scenario error carries the JSON path of the offending field
    // (e.g. "agents[2].speed"); the path is empty for syntax errors.
    class ScenarioError : public std::runtime_error
    {
    public:
        ScenarioError(ScenarioErrorKind kind, std::string path, const std::string &detail);

        ScenarioErrorKind kind() const noexcept { return m_kind; }
        const std::string &path() const noexcept { return m_path; }

    private:
        ScenarioErrorKind m_kind;
        std::string m_path;
    };

    Scenario parse_scenario(std::string_view text);

    // Canonical form: sorted keys, compact separators, shortest round-trip
    // floats. Equal scenarios serialize to identical bytes.
    std::string serialize_scenario(const Scenario &s);

    // Throws ScenarioError(InvariantViolation) naming the first bad field.
    void validate_scenario(const Scenario &s);

    // 5 UAVs, 12 targets (5 of them decoys) in a ~2 km square.
    Scenario default_scenario();

    // 64-bit FNV-1a of the canonical serialization, as 16 hex digits.
    std::string scenario_digest(const Scenario &s);
}
