#include "swarm/scenario.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <numbers>
#include <unordered_set>

namespace swarm
{
    using nlohmann::json;

    std::string_view to_string(GroundTruth g) noexcept
    {
        return g == GroundTruth::Casualty ? "Casualty" : "NoCasualty";
    }

    std::string_view to_string(Mode m) noexcept
    {
        return m == Mode::Autonomous ? "Autonomous" : "HumanTeaming";
    }

    GroundTruth ground_truth_from_string(std::string_view s)
    {
        if (s == "Casualty")
            return GroundTruth::Casualty;
        if (s == "NoCasualty")
            return GroundTruth::NoCasualty;
        throw std::invalid_argument("unknown ground truth '" + std::string(s) + "'");
    }

    Mode mode_from_string(std::string_view s)
    {
        if (s == "Autonomous")
            return Mode::Autonomous;
        if (s == "HumanTeaming")
            return Mode::HumanTeaming;
        throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
    }

    std::string_view to_string(ScenarioErrorKind k) noexcept
    {
        switch (k)
        {
        case ScenarioErrorKind::MalformedJson:
            return "MalformedJson";
        case ScenarioErrorKind::SchemaViolation:
            return "SchemaViolation";
        case ScenarioErrorKind::InvariantViolation:
            return "InvariantViolation";
        }
        return "?";
    }

    ScenarioError::ScenarioError(ScenarioErrorKind kind, std::string path, const std::string &detail)
        : std::runtime_error(std::string(to_string(kind)) + (path.empty() ? "" : " at " + path) + ": " + detail),
          m_kind(kind),
          m_path(std::move(path))
    {
    }

    namespace
    {
        [[noreturn]] void schema_error(const std::string &path, const std::string &detail)
        {
            throw ScenarioError(ScenarioErrorKind::SchemaViolation, path, detail);
        }

        [[noreturn]] void invariant_error(const std::string &path, const std::string &detail)
        {
            throw ScenarioError(ScenarioErrorKind::InvariantViolation, path, detail);
        }

        std::string join_path(const std::string &base, std::string_view key)
        {
            return base.empty() ? std::string(key) : base + "." + std::string(key);
        }

        // Reads one JSON object field by field, rejecting unknown and
        // mistyped keys with the full path of the offending field.
        class ObjectReader
        {
        public:
            ObjectReader(const json &j, std::string path, std::initializer_list<std::string_view> allowed)
                : m_obj(j), m_path(std::move(path))
            {
                if (!j.is_object())
                    schema_error(m_path.empty() ? "$" : m_path, "expected an object");
                for (const auto &[key, _] : j.items())
                {
                    bool known = false;
                    for (auto a : allowed)
                        known = known || a == key;
                    if (!known)
                        schema_error(field(key), "unknown field");
                }
            }

            std::string field(std::string_view key) const { return join_path(m_path, key); }

            const json *find(std::string_view key) const
            {
                auto it = m_obj.find(std::string(key));
                return it == m_obj.end() ? nullptr : &*it;
            }

            const json &require(std::string_view key) const
            {
                const json *v = find(key);
                if (!v)
                    schema_error(field(key), "missing required field");
                return *v;
            }

            std::string string(std::string_view key) const
            {
                const json &v = require(key);
                if (!v.is_string())
                    schema_error(field(key), "expected a string");
                return v.get<std::string>();
            }

            double number(std::string_view key) const { return as_number(require(key), key); }

            double number_or(std::string_view key, double fallback) const
            {
                const json *v = find(key);
                return v ? as_number(*v, key) : fallback;
            }

            std::uint64_t unsigned_integer(std::string_view key) const
            {
                const json &v = require(key);
                if (!v.is_number_unsigned())
                    schema_error(field(key), "expected a non-negative integer");
                return v.get<std::uint64_t>();
            }

            const json &array(std::string_view key) const
            {
                const json &v = require(key);
                if (!v.is_array())
                    schema_error(field(key), "expected an array");
                return v;
            }

        private:
            double as_number(const json &v, std::string_view key) const
            {
                if (!v.is_number())
                    schema_error(field(key), "expected a number");
                double d = v.get<double>();
                if (!std::isfinite(d))
                    invariant_error(field(key), "must be finite");
                return d;
            }

            const json &m_obj;
            std::string m_path;
        };

        GeoPosition read_position(const json &j, const std::string &path)
        {
            ObjectReader r(j, path, {"lat", "lon", "alt"});
            GeoPosition p{r.number("lat"), r.number("lon"), r.number_or("alt", 0.0)};
            return p;
        }

        AgentSpec read_agent(const json &j, const std::string &path)
        {
            ObjectReader r(j, path, {"id", "start", "speed", "energy_budget", "visibility_radius", "arrival_radius"});
            AgentSpec a;
            a.id = r.string("id");
            a.start = read_position(r.require("start"), r.field("start"));
            a.speed = r.number("speed");
            a.energy_budget = r.number("energy_budget");
            a.visibility_radius = r.number_or("visibility_radius", kDefaultVisibilityRadius);
            a.arrival_radius = r.number_or("arrival_radius", kDefaultArrivalRadius);
            return a;
        }

        TargetSpec read_target(const json &j, const std::string &path)
        {
            ObjectReader r(j, path, {"id", "position", "ground_truth", "reward"});
            TargetSpec t;
            t.id = r.string("id");
            t.position = read_position(r.require("position"), r.field("position"));
            try
            {
                t.ground_truth = ground_truth_from_string(r.string("ground_truth"));
            }
            catch (const std::invalid_argument &e)
            {
                schema_error(r.field("ground_truth"), e.what());
            }
            t.reward = r.number_or("reward", kDefaultReward);
            return t;
        }

        HazardSpec read_hazard(const json &j, const std::string &path)
        {
            ObjectReader r(j, path, {"id", "center", "radius", "penalty"});
            HazardSpec h;
            h.id = r.string("id");
            h.center = read_position(r.require("center"), r.field("center"));
            h.radius = r.number("radius");
            h.penalty = r.number("penalty");
            return h;
        }

        ModeConfig read_mode_config(const json &j, const std::string &path)
        {
            ObjectReader r(j, path, {"mode", "tick_hz", "time_limit", "rng_seed"});
            ModeConfig m;
            try
            {
                m.mode = mode_from_string(r.string("mode"));
            }
            catch (const std::invalid_argument &e)
            {
                schema_error(r.field("mode"), e.what());
            }
            m.tick_hz = r.number_or("tick_hz", kDefaultTickHz);
            m.time_limit = r.number_or("time_limit", kDefaultTimeLimit);
            m.rng_seed = r.unsigned_integer("rng_seed");
            return m;
        }

        std::string indexed(std::string_view list, std::size_t i)
        {
            return std::string(list) + "[" + std::to_string(i) + "]";
        }

        void check_position(const GeoPosition &p, const std::string &path)
        {
            if (!std::isfinite(p.lat) || p.lat < -90.0 || p.lat > 90.0)
                invariant_error(path + ".lat", "latitude must lie in [-90, 90]");
            if (!std::isfinite(p.lon) || p.lon < -180.0 || p.lon > 180.0)
                invariant_error(path + ".lon", "longitude must lie in [-180, 180]");
            if (!std::isfinite(p.alt) || p.alt < 0.0)
                invariant_error(path + ".alt", "altitude must be >= 0");
        }

        void check_positive(double v, const std::string &path)
        {
            if (!std::isfinite(v) || v <= 0.0)
                invariant_error(path, "must be > 0");
        }

        void check_non_negative(double v, const std::string &path)
        {
            if (!std::isfinite(v) || v < 0.0)
                invariant_error(path, "must be >= 0");
        }

        json position_json(const GeoPosition &p)
        {
            return json{{"lat", p.lat}, {"lon", p.lon}, {"alt", p.alt}};
        }
    }

    void validate_scenario(const Scenario &s)
    {
        if (s.agents.empty())
            invariant_error("agents", "at least one agent is required");

        std::unordered_set<std::string> ids;
        auto claim_id = [&](const std::string &id, const std::string &path)
        {
            if (id.empty())
                invariant_error(path, "id must be non-empty");
            if (!ids.insert(id).second)
                invariant_error(path, "duplicate id '" + id + "'");
        };

        for (std::size_t i = 0; i < s.agents.size(); ++i)
        {
            const auto &a = s.agents[i];
            const auto path = indexed("agents", i);
            claim_id(a.id, path + ".id");
            check_position(a.start, path + ".start");
            check_positive(a.speed, path + ".speed");
            check_positive(a.energy_budget, path + ".energy_budget");
            check_positive(a.visibility_radius, path + ".visibility_radius");
            check_positive(a.arrival_radius, path + ".arrival_radius");
            if (a.arrival_radius > a.visibility_radius)
                invariant_error(path + ".arrival_radius", "must not exceed visibility_radius");
        }
        for (std::size_t i = 0; i < s.targets.size(); ++i)
        {
            const auto &t = s.targets[i];
            const auto path = indexed("targets", i);
            claim_id(t.id, path + ".id");
            check_position(t.position, path + ".position");
            check_non_negative(t.reward, path + ".reward");
        }
        for (std::size_t i = 0; i < s.hazards.size(); ++i)
        {
            const auto &h = s.hazards[i];
            const auto path = indexed("hazards", i);
            claim_id(h.id, path + ".id");
            check_position(h.center, path + ".center");
            check_positive(h.radius, path + ".radius");
            check_non_negative(h.penalty, path + ".penalty");
        }
        check_positive(s.mode_config.tick_hz, "mode_config.tick_hz");
        check_positive(s.mode_config.time_limit, "mode_config.time_limit");
    }

    Scenario parse_scenario(std::string_view text)
    {
        json doc;
        try
        {
            doc = json::parse(text.begin(), text.end());
        }
        catch (const json::parse_error &e)
        {
            throw ScenarioError(ScenarioErrorKind::MalformedJson, "", e.what());
        }

        ObjectReader root(doc, "", {"name", "agents", "targets", "hazards", "mode_config"});
        Scenario s;
        s.name = root.string("name");

        const json &agents = root.array("agents");
        for (std::size_t i = 0; i < agents.size(); ++i)
            s.agents.push_back(read_agent(agents[i], indexed("agents", i)));

        const json &targets = root.array("targets");
        for (std::size_t i = 0; i < targets.size(); ++i)
            s.targets.push_back(read_target(targets[i], indexed("targets", i)));

        const json &hazards = root.array("hazards");
        for (std::size_t i = 0; i < hazards.size(); ++i)
            s.hazards.push_back(read_hazard(hazards[i], indexed("hazards", i)));

        s.mode_config = read_mode_config(root.require("mode_config"), "mode_config");

        validate_scenario(s);
        return s;
    }

    std::string serialize_scenario(const Scenario &s)
    {
        json agents = json::array();
        for (const auto &a : s.agents)
        {
            agents.push_back({{"id", a.id},
                              {"start", position_json(a.start)},
                              {"speed", a.speed},
                              {"energy_budget", a.energy_budget},
                              {"visibility_radius", a.visibility_radius},
                              {"arrival_radius", a.arrival_radius}});
        }
        json targets = json::array();
        for (const auto &t : s.targets)
        {
            targets.push_back({{"id", t.id},
                               {"position", position_json(t.position)},
                               {"ground_truth", std::string(to_string(t.ground_truth))},
                               {"reward", t.reward}});
        }
        json hazards = json::array();
        for (const auto &h : s.hazards)
        {
            hazards.push_back({{"id", h.id},
                               {"center", position_json(h.center)},
                               {"radius", h.radius},
                               {"penalty", h.penalty}});
        }
        json doc = {{"name", s.name},
                    {"agents", std::move(agents)},
                    {"targets", std::move(targets)},
                    {"hazards", std::move(hazards)},
                    {"mode_config",
                     {{"mode", std::string(to_string(s.mode_config.mode))},
                      {"tick_hz", s.mode_config.tick_hz},
                      {"time_limit", s.mode_config.time_limit},
                      {"rng_seed", s.mode_config.rng_seed}}}};
        // nlohmann::json stores objects in a std::map, so keys come out sorted.
        return doc.dump();
    }

    namespace
    {
        // Offsets in meters (east, north) from the south-west corner of the area.
        struct Placement
        {
            const char *id;
            double east;
            double north;
            GroundTruth truth;
        };

        constexpr double kOriginLat = 50.9350;
        constexpr double kOriginLon = -1.3960;
        constexpr double kMetersPerDegree = 6371008.8 * std::numbers::pi / 180.0;

        GeoPosition offset(double east, double north)
        {
            const double lat = kOriginLat + north / kMetersPerDegree;
            const double lon = kOriginLon + east / (kMetersPerDegree * std::cos(kOriginLat * std::numbers::pi / 180.0));
            // Round to 1e-7 degrees (~1 cm) so the canonical file stays readable.
            auto round7 = [](double v) { return std::round(v * 1e7) / 1e7; };
            return GeoPosition{round7(lat), round7(lon), 0.0};
        }
    }

    Scenario default_scenario()
    {
        using enum GroundTruth;
        static constexpr Placement kTargets[] = {
            {"t01", 300, 350, Casualty},
            {"t02", 750, 250, NoCasualty},
            {"t03", 1400, 300, Casualty},
            {"t04", 1800, 500, NoCasualty},
            {"t05", 200, 900, NoCasualty},
            {"t06", 650, 800, Casualty},
            {"t07", 1150, 950, NoCasualty},
            {"t08", 1700, 1100, Casualty},
            {"t09", 400, 1500, Casualty},
            {"t10", 900, 1650, NoCasualty},
            {"t11", 1400, 1550, Casualty},
            {"t12", 1850, 1850, Casualty},
        };

        Scenario s;
        s.name = "default";
        for (int i = 0; i < 5; ++i)
        {
            AgentSpec a;
            a.id = "uav" + std::to_string(i + 1);
            a.start = offset(900.0 + 50.0 * i, 0.0);
            a.speed = 10.0;
            a.energy_budget = 20000.0;
            s.agents.push_back(a);
        }
        for (const auto &p : kTargets)
        {
            TargetSpec t;
            t.id = p.id;
            t.position = offset(p.east, p.north);
            t.ground_truth = p.truth;
            s.targets.push_back(t);
        }
        s.hazards.push_back(HazardSpec{"h1", offset(1000, 600), 120.0, 200.0});
        s.mode_config = ModeConfig{Mode::Autonomous, kDefaultTickHz, kDefaultTimeLimit, 20230529};
        return s;
    }

    std::string scenario_digest(const Scenario &s)
    {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : serialize_scenario(s))
        {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
}
