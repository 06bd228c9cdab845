#pragma once

#include "swarm/scenario.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace swarm
{
    struct WorldState;

    inline constexpr int kResolutionLevels = 8;

    struct Actor
    {
        enum class Kind : std::uint8_t
        {
            Human,
            Autonomous,
        };

        Kind kind = Kind::Human;
        std::string id; // client id or agent id

        static Actor human(std::string client) { return {Kind::Human, std::move(client)}; }
        static Actor autonomous(std::string agent) { return {Kind::Autonomous, std::move(agent)}; }

        bool operator==(const Actor &) const = default;
    };

    struct ClassificationEvent
    {
        Actor actor;
        std::string target_id;
        GroundTruth label = GroundTruth::Casualty;
        double sim_time = 0.0;
        bool correct = false;

        bool operator==(const ClassificationEvent &) const = default;
    };

    // Square grayscale grid, grid_size = 2^resolution_level.
    struct ImageDescriptor
    {
        int resolution_level = 0;
        int grid_size = 1;
        std::vector<std::uint8_t> cells; // row-major

        bool operator==(const ImageDescriptor &) const = default;
    };

    struct CameraFeed
    {
        std::string target_id;
        std::string observer; // agent with the best view
        double clarity = 0.0;
        int resolution_level = 0;
        ImageDescriptor image;
    };

    enum class ClassifyErrorKind : std::uint8_t
    {
        AlreadyClassified,
        NoFeedAvailable,
        UnknownTarget,
        UnknownAgent,
        NotArrived,
    };

    std::string_view to_string(ClassifyErrorKind k) noexcept;

    class ClassifyError : public std::runtime_error
    {
    public:
        ClassifyError(ClassifyErrorKind kind, const std::string &detail);
        ClassifyErrorKind kind() const noexcept { return m_kind; }

    private:
        ClassifyErrorKind m_kind;
    };

    // clamp(1 - d / visibility_radius, 0, 1), d the haversine distance.
    double clarity_at(const GeoPosition &agent_pos, const GeoPosition &target_pos, double visibility_radius) noexcept;

    // floor(clarity * L) clamped to [0, L].
    int resolution_level(double clarity) noexcept;

    std::uint64_t image_seed(std::uint64_t scenario_seed, std::string_view target_id) noexcept;

    // Seeded aerial patch holding either a casualty figure or a debris decoy,
    // block-averaged down to the requested level.
    ImageDescriptor render_image(std::uint64_t seed, GroundTruth truth, int level);

    // Best clarity over all agents for an Unknown target, or nullopt when no
    // agent sees it (or the target is classified or unknown).
    struct Sighting
    {
        std::size_t agent = 0;
        double clarity = 0.0;
    };
    std::optional<Sighting> best_sighting(const WorldState &world, std::string_view target_id);

    std::optional<CameraFeed> feed_for(const WorldState &world, std::string_view target_id);

    // Marks the target Classified, updates the tally, drops constraints that
    // reference it and flags the allocation for rebuild.
    ClassificationEvent classify(WorldState &world, const Actor &actor, std::string_view target_id, GroundTruth label);

    // Arrival of an agent at its allocated target: classification by ground truth.
    ClassificationEvent auto_resolve(WorldState &world, std::string_view agent_id, std::string_view target_id);

    nlohmann::json to_json(const Actor &a);
    nlohmann::json to_json(const ClassificationEvent &e);
    nlohmann::json to_json(const ImageDescriptor &d);
    nlohmann::json to_json(const CameraFeed &f);
}
