#include "swarm/perception.hpp"
#include "swarm/world.hpp"

#include <algorithm>
#include <cmath>

namespace swarm
{
    using nlohmann::json;

    namespace
    {
        constexpr int kFullSize = 1 << kResolutionLevels; // 256

        std::uint64_t splitmix64(std::uint64_t x) noexcept
        {
            x += 0x9e3779b97f4a7c15ull;
            x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
            x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
            return x ^ (x >> 31);
        }

        std::uint64_t cell_hash(std::uint64_t seed, std::uint64_t x, std::uint64_t y) noexcept
        {
            return splitmix64(seed ^ splitmix64((x << 32) | y));
        }

        // Uniform integer in [lo, hi] from a hash.
        int draw(std::uint64_t h, int lo, int hi) noexcept
        {
            return lo + static_cast<int>(h % static_cast<std::uint64_t>(hi - lo + 1));
        }

        bool in_figure(int x, int y, int cx, int cy) noexcept
        {
            // Prone figure: head disc plus torso and outstretched arms.
            const int hx = x - cx;
            const int hy = y - (cy - 26);
            if (hx * hx + hy * hy <= 8 * 8)
                return true;
            if (std::abs(x - cx) <= 6 && y >= cy - 18 && y <= cy + 30)
                return true;
            if (std::abs(y - (cy - 8)) <= 4 && std::abs(x - cx) <= 24)
                return true;
            return std::abs(y - (cy + 30)) <= 4 && std::abs(x - cx) <= 14;
        }

        bool in_debris(int x, int y, int cx, int cy) noexcept
        {
            return std::abs(x - cx) <= 18 && std::abs(y - cy) <= 14;
        }

        std::uint8_t full_res_pixel(std::uint64_t seed, GroundTruth truth, int ox, int oy, int x, int y) noexcept
        {
            // Coarse terrain blocks with fine grain on top.
            int v = draw(cell_hash(seed, static_cast<std::uint64_t>(x / 32), static_cast<std::uint64_t>(y / 32)), 60, 130);
            v += draw(cell_hash(seed + 1, static_cast<std::uint64_t>(x), static_cast<std::uint64_t>(y)), -18, 18);
            const bool object = truth == GroundTruth::Casualty ? in_figure(x, y, ox, oy) : in_debris(x, y, ox, oy);
            if (object)
                v = 215 + draw(cell_hash(seed + 2, static_cast<std::uint64_t>(x), static_cast<std::uint64_t>(y)), -10, 10);
            return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
        }

        std::string_view actor_kind(Actor::Kind k) noexcept
        {
            return k == Actor::Kind::Human ? "Human" : "Autonomous";
        }
    }

    std::string_view to_string(ClassifyErrorKind k) noexcept
    {
        switch (k)
        {
        case ClassifyErrorKind::AlreadyClassified:
            return "AlreadyClassified";
        case ClassifyErrorKind::NoFeedAvailable:
            return "NoFeedAvailable";
        case ClassifyErrorKind::UnknownTarget:
            return "UnknownTarget";
        case ClassifyErrorKind::UnknownAgent:
            return "UnknownAgent";
        case ClassifyErrorKind::NotArrived:
            return "NotArrived";
        }
        return "?";
    }

    ClassifyError::ClassifyError(ClassifyErrorKind kind, const std::string &detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail), m_kind(kind)
    {
    }

    double clarity_at(const GeoPosition &agent_pos, const GeoPosition &target_pos, double visibility_radius) noexcept
    {
        const double d = haversine_distance(agent_pos, target_pos);
        return std::clamp(1.0 - d / visibility_radius, 0.0, 1.0);
    }

    int resolution_level(double clarity) noexcept
    {
        const int level = static_cast<int>(std::floor(clarity * kResolutionLevels));
        return std::clamp(level, 0, kResolutionLevels);
    }

    std::uint64_t image_seed(std::uint64_t scenario_seed, std::string_view target_id) noexcept
    {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : target_id)
        {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return splitmix64(splitmix64(scenario_seed) ^ h);
    }

    ImageDescriptor render_image(std::uint64_t seed, GroundTruth truth, int level)
    {
        level = std::clamp(level, 0, kResolutionLevels);
        const int size = 1 << level;
        const int block = kFullSize / size;
        const int ox = kFullSize / 2 + draw(splitmix64(seed + 3), -40, 40);
        const int oy = kFullSize / 2 + draw(splitmix64(seed + 4), -40, 40);

        ImageDescriptor out;
        out.resolution_level = level;
        out.grid_size = size;
        out.cells.resize(static_cast<std::size_t>(size) * size);
        for (int by = 0; by < size; ++by)
        {
            for (int bx = 0; bx < size; ++bx)
            {
                std::uint32_t sum = 0;
                for (int y = by * block; y < (by + 1) * block; ++y)
                    for (int x = bx * block; x < (bx + 1) * block; ++x)
                        sum += full_res_pixel(seed, truth, ox, oy, x, y);
                out.cells[static_cast<std::size_t>(by) * size + bx] =
                    static_cast<std::uint8_t>(sum / static_cast<std::uint32_t>(block * block));
            }
        }
        return out;
    }

    std::optional<Sighting> best_sighting(const WorldState &world, std::string_view target_id)
    {
        const auto t = world.target_index(target_id);
        if (!t || !world.targets[*t].unknown())
            return std::nullopt;
        const auto &pos = world.target_spec(*t).position;
        std::optional<Sighting> best;
        for (std::size_t i = 0; i < world.agents.size(); ++i)
        {
            const double c = clarity_at(world.agents[i].position, pos, world.agent_spec(i).visibility_radius);
            if (c > 0.0 && (!best || c > best->clarity))
                best = Sighting{i, c};
        }
        return best;
    }

    std::optional<CameraFeed> feed_for(const WorldState &world, std::string_view target_id)
    {
        const auto sighting = best_sighting(world, target_id);
        if (!sighting)
            return std::nullopt;
        const auto &spec = world.target_spec(*world.target_index(target_id));
        CameraFeed feed;
        feed.target_id = spec.id;
        feed.observer = world.agents[sighting->agent].id;
        feed.clarity = sighting->clarity;
        feed.resolution_level = resolution_level(sighting->clarity);
        feed.image = render_image(image_seed(world.rng_seed, spec.id), spec.ground_truth, feed.resolution_level);
        return feed;
    }

    ClassificationEvent classify(WorldState &world, const Actor &actor, std::string_view target_id, GroundTruth label)
    {
        const auto t = world.target_index(target_id);
        if (!t)
            throw ClassifyError(ClassifyErrorKind::UnknownTarget, "no target '" + std::string(target_id) + "'");
        auto &target = world.targets[*t];
        if (!target.unknown())
            throw ClassifyError(ClassifyErrorKind::AlreadyClassified,
                                "target '" + target.id + "' is already classified");
        if (actor.kind == Actor::Kind::Human && !best_sighting(world, target_id))
            throw ClassifyError(ClassifyErrorKind::NoFeedAvailable, "no agent currently observes '" + target.id + "'");

        ClassificationEvent ev{actor, target.id, label, world.sim_time, label == world.target_spec(*t).ground_truth};
        target.classification = ev;
        ++world.tally.classifications;
        if (ev.correct)
            ++world.tally.correct;

        // A resolved pin releases the reassigned agent's displaced-pairing forbids.
        std::vector<std::string> released;
        for (const auto &c : world.constraints)
            if (const auto *pin = std::get_if<Pin>(&c.kind); pin && pin->task == target.id)
                released.push_back(pin->agent);
        std::erase_if(world.constraints,
                      [&](const OperatorConstraint &c)
                      {
                          if (const auto *pin = std::get_if<Pin>(&c.kind))
                              return pin->task == target.id;
                          const auto &f = std::get<Forbid>(c.kind);
                          if (f.task == target.id)
                              return true;
                          return c.source == ConstraintSource::ManualReassign &&
                                 std::find(released.begin(), released.end(), f.agent) != released.end();
                      });
        world.allocation_dirty = true;
        return ev;
    }

    ClassificationEvent auto_resolve(WorldState &world, std::string_view agent_id, std::string_view target_id)
    {
        const auto a = world.agent_index(agent_id);
        if (!a)
            throw ClassifyError(ClassifyErrorKind::UnknownAgent, "no agent '" + std::string(agent_id) + "'");
        const auto t = world.target_index(target_id);
        if (!t)
            throw ClassifyError(ClassifyErrorKind::UnknownTarget, "no target '" + std::string(target_id) + "'");
        const double d = haversine_distance(world.agents[*a].position, world.target_spec(*t).position);
        if (d > world.agent_spec(*a).arrival_radius)
            throw ClassifyError(ClassifyErrorKind::NotArrived,
                                "agent '" + std::string(agent_id) + "' is " + std::to_string(d) + " m from target");
        return classify(world, Actor::autonomous(std::string(agent_id)), target_id, world.target_spec(*t).ground_truth);
    }

    json to_json(const Actor &a)
    {
        return json{{"kind", actor_kind(a.kind)}, {"id", a.id}};
    }

    json to_json(const ClassificationEvent &e)
    {
        return json{{"actor", to_json(e.actor)},
                    {"target_id", e.target_id},
                    {"label", to_string(e.label)},
                    {"sim_time", e.sim_time},
                    {"correct", e.correct}};
    }

    json to_json(const ImageDescriptor &d)
    {
        return json{{"resolution_level", d.resolution_level}, {"grid_size", d.grid_size}, {"cells", d.cells}};
    }

    json to_json(const CameraFeed &f)
    {
        return json{{"target_id", f.target_id},
                    {"observer", f.observer},
                    {"clarity", f.clarity},
                    {"resolution_level", f.resolution_level},
                    {"image", to_json(f.image)}};
    }
}
