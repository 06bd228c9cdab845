#include "swarm/engine.hpp"

#include <algorithm>
#include <cmath>

namespace swarm
{
    using nlohmann::json;

    std::optional<std::size_t> WorldState::agent_index(std::string_view id) const
    {
        for (std::size_t i = 0; i < agents.size(); ++i)
            if (agents[i].id == id)
                return i;
        return std::nullopt;
    }

    std::optional<std::size_t> WorldState::target_index(std::string_view id) const
    {
        for (std::size_t i = 0; i < targets.size(); ++i)
            if (targets[i].id == id)
                return i;
        return std::nullopt;
    }

    std::size_t WorldState::unknown_targets() const
    {
        return static_cast<std::size_t>(
            std::count_if(targets.begin(), targets.end(), [](const TargetRuntime &t) { return t.unknown(); }));
    }

    WorldState make_world(std::shared_ptr<const Scenario> scenario, EnergyModel energy)
    {
        WorldState w;
        w.scenario = std::move(scenario);
        w.energy_model = energy;
        for (const auto &a : w.scenario->agents)
            w.agents.push_back(AgentRuntime{a.id, a.start, a.energy_budget, false, std::nullopt, {}});
        for (const auto &t : w.scenario->targets)
            w.targets.push_back(TargetRuntime{t.id, std::nullopt});
        w.mode = w.scenario->mode_config.mode;
        w.rng_seed = w.scenario->mode_config.rng_seed;
        reallocate(w);
        return w;
    }

    std::string_view to_string(RejectReason r) noexcept
    {
        switch (r)
        {
        case RejectReason::ModeForbids:
            return "ModeForbids";
        case RejectReason::AlreadyClassified:
            return "AlreadyClassified";
        case RejectReason::NoFeedAvailable:
            return "NoFeedAvailable";
        case RejectReason::UnknownTarget:
            return "UnknownTarget";
        case RejectReason::UnknownAgent:
            return "UnknownAgent";
        case RejectReason::InfeasibleConstraint:
            return "InfeasibleConstraint";
        }
        return "?";
    }

    namespace
    {
        RejectReason reason_for(ClassifyErrorKind k)
        {
            switch (k)
            {
            case ClassifyErrorKind::AlreadyClassified:
                return RejectReason::AlreadyClassified;
            case ClassifyErrorKind::NoFeedAvailable:
            case ClassifyErrorKind::NotArrived:
                return RejectReason::NoFeedAvailable;
            case ClassifyErrorKind::UnknownTarget:
                return RejectReason::UnknownTarget;
            case ClassifyErrorKind::UnknownAgent:
                return RejectReason::UnknownAgent;
            }
            return RejectReason::UnknownTarget;
        }

        json classified_event(const ClassificationEvent &e)
        {
            json j = to_json(e);
            j["type"] = "Classified";
            return j;
        }

        json position_json(const GeoPosition &p)
        {
            return json{{"lat", p.lat}, {"lon", p.lon}, {"alt", p.alt}};
        }

        void plan_schedules(WorldState &world)
        {
            struct Slot
            {
                double ready = 0.0;
                GeoPosition at;
                bool available = true;
            };

            std::vector<Slot> slots(world.agents.size());
            std::vector<bool> claimed(world.targets.size(), false);
            for (std::size_t i = 0; i < world.agents.size(); ++i)
            {
                auto &agent = world.agents[i];
                agent.schedule.clear();
                slots[i].at = agent.position;
                for (const auto &c : world.constraints)
                    if (const auto *pin = std::get_if<Pin>(&c.kind); pin && pin->agent == agent.id && !pin->task)
                        slots[i].available = false;
                if (!agent.current_task)
                    continue;
                const auto t = *world.target_index(*agent.current_task);
                claimed[t] = true;
                const auto &pos = world.target_spec(t).position;
                slots[i].ready = haversine_distance(agent.position, pos) / world.agent_spec(i).speed;
                slots[i].at = pos;
                agent.schedule.push_back(*agent.current_task);
            }

            // Earliest-free agent takes its nearest unclaimed target.
            while (true)
            {
                std::optional<std::size_t> agent;
                for (std::size_t i = 0; i < slots.size(); ++i)
                    if (slots[i].available && (!agent || slots[i].ready < slots[*agent].ready))
                        agent = i;
                if (!agent)
                    return;
                std::optional<std::size_t> next;
                double best = 0.0;
                for (std::size_t t = 0; t < world.targets.size(); ++t)
                {
                    if (claimed[t] || !world.targets[t].unknown())
                        continue;
                    const double d = haversine_distance(slots[*agent].at, world.target_spec(t).position);
                    if (!next || d < best)
                    {
                        next = t;
                        best = d;
                    }
                }
                if (!next)
                    return;
                claimed[*next] = true;
                slots[*agent].ready += best / world.agent_spec(*agent).speed;
                slots[*agent].at = world.target_spec(*next).position;
                world.agents[*agent].schedule.push_back(world.targets[*next].id);
            }
        }

        std::optional<RejectReason> apply_classify(WorldState &world, const ClassifyCommand &cmd, std::vector<json> &events)
        {
            if (cmd.actor.kind == Actor::Kind::Human && world.mode == Mode::Autonomous)
                return RejectReason::ModeForbids;
            try
            {
                const auto ev = cmd.actor.kind == Actor::Kind::Human ? classify(world, cmd.actor, cmd.target, cmd.label)
                                                                     : auto_resolve(world, cmd.actor.id, cmd.target);
                events.push_back(classified_event(ev));
            }
            catch (const ClassifyError &e)
            {
                return reason_for(e.kind());
            }
            return std::nullopt;
        }

        std::optional<RejectReason> apply_reassign(WorldState &world, const ReassignCommand &cmd, std::vector<json> &events)
        {
            if (world.mode == Mode::Autonomous)
                return RejectReason::ModeForbids;
            const auto a = world.agent_index(cmd.agent);
            if (!a)
                return RejectReason::UnknownAgent;
            if (cmd.target)
            {
                const auto t = world.target_index(*cmd.target);
                if (!t)
                    return RejectReason::UnknownTarget;
                if (!world.targets[*t].unknown())
                    return RejectReason::AlreadyClassified;
            }

            // Agents whose manual overrides are superseded by this command.
            std::vector<std::string> superseded{cmd.agent};
            for (const auto &c : world.constraints)
            {
                const auto *pin = std::get_if<Pin>(&c.kind);
                if (pin && cmd.target && pin->task == cmd.target && pin->agent != cmd.agent)
                    superseded.push_back(pin->agent);
            }
            auto is_superseded = [&](const std::string &agent)
            { return std::find(superseded.begin(), superseded.end(), agent) != superseded.end(); };

            std::vector<OperatorConstraint> next;
            for (const auto &c : world.constraints)
            {
                if (c.source == ConstraintSource::ManualReassign)
                {
                    const std::string &agent = std::visit([](const auto &k) -> const std::string & { return k.agent; }, c.kind);
                    if (is_superseded(agent))
                        continue;
                }
                next.push_back(c);
            }
            const auto &current = world.agents[*a].current_task;
            if (current && current != cmd.target)
                next.push_back(OperatorConstraint{Forbid{cmd.agent, *current}, ConstraintSource::ManualReassign});
            next.push_back(OperatorConstraint{Pin{cmd.agent, cmd.target}, ConstraintSource::ManualReassign});

            try
            {
                apply_constraints(build_problem(world, next));
            }
            catch (const AllocationError &)
            {
                return RejectReason::InfeasibleConstraint;
            }
            world.constraints = std::move(next);
            world.allocation_dirty = true;
            events.push_back(json{{"type", "Reassigned"},
                                  {"agent", cmd.agent},
                                  {"target", cmd.target ? json(*cmd.target) : json(nullptr)}});
            return std::nullopt;
        }

        std::optional<RejectReason> apply_command(WorldState &world, const Command &cmd, std::vector<json> &events)
        {
            return std::visit(
                [&](const auto &body) -> std::optional<RejectReason>
                {
                    using T = std::decay_t<decltype(body)>;
                    if constexpr (std::is_same_v<T, ClassifyCommand>)
                        return apply_classify(world, body, events);
                    else if constexpr (std::is_same_v<T, ReassignCommand>)
                        return apply_reassign(world, body, events);
                    else if constexpr (std::is_same_v<T, SetModeCommand>)
                    {
                        set_mode(world, body.mode);
                        events.push_back(json{{"type", "ModeChanged"}, {"mode", to_string(body.mode)}});
                        return std::nullopt;
                    }
                    else if constexpr (std::is_same_v<T, PauseCommand>)
                    {
                        world.paused = true;
                        events.push_back(json{{"type", "Paused"}});
                        return std::nullopt;
                    }
                    else
                    {
                        world.paused = false;
                        events.push_back(json{{"type", "Resumed"}});
                        return std::nullopt;
                    }
                },
                cmd.body);
        }

        void reallocate_if_dirty(WorldState &world, const EngineParams &params, std::vector<json> &events)
        {
            if (!world.allocation_dirty)
                return;
            reallocate(world, params);
            events.push_back(json{{"type", "Reallocated"}, {"allocation", to_json(world.allocation)}});
        }

        // Energy for one motion step; hazard penalties are charged on entry.
        double step_energy(const WorldState &world, const GeoPosition &from, const GeoPosition &to)
        {
            double e = haversine_distance(from, to) * world.energy_model.joules_per_meter;
            for (const auto &h : world.scenario->hazards)
            {
                const bool inside = haversine_distance(from, h.center) <= h.radius;
                if (!inside && segment_intersects_disk(from, to, h.center, h.radius))
                    e += h.penalty;
            }
            return e;
        }
    }

    void set_mode(WorldState &world, Mode mode)
    {
        world.mode = mode;
    }

    void reallocate(WorldState &world, const EngineParams &params)
    {
        const auto problem = build_problem(world, world.constraints);
        world.allocation = run_max_sum(problem, params.max_sum_iters, params.max_sum_damping);
        for (auto &agent : world.agents)
            agent.current_task = world.allocation.assignment.at(agent.id);
        plan_schedules(world);
        world.allocation_dirty = false;
    }

    bool run_complete(const WorldState &world)
    {
        return world.unknown_targets() == 0 || world.sim_time >= world.scenario->mode_config.time_limit;
    }

    TickReport tick(WorldState &world, double dt, std::span<const Command> pending, const EngineParams &params)
    {
        TickReport report;
        report.tick = world.tick;

        std::vector<const Command *> ordered;
        for (const auto &c : pending)
            ordered.push_back(&c);
        std::stable_sort(ordered.begin(), ordered.end(), [](const Command *a, const Command *b) { return a->seq < b->seq; });

        for (const Command *cmd : ordered)
        {
            CommandOutcome outcome{cmd->seq, cmd->issued_by, apply_command(world, *cmd, report.events), to_json(*cmd)};
            if (outcome.rejected)
                report.events.push_back(json{{"type", "Rejected"},
                                             {"seq", cmd->seq},
                                             {"reason", to_string(*outcome.rejected)}});
            report.outcomes.push_back(std::move(outcome));
        }
        reallocate_if_dirty(world, params, report.events);

        if (!world.paused && !run_complete(world))
        {
            for (std::size_t i = 0; i < world.agents.size(); ++i)
            {
                auto &agent = world.agents[i];
                if (!agent.current_task)
                    continue;
                const auto &dest = world.target_spec(*world.target_index(*agent.current_task)).position;
                const GeoPosition next = step_towards(agent.position, dest, world.agent_spec(i).speed, dt);
                agent.remaining_energy -= step_energy(world, agent.position, next);
                agent.position = next;
                if (agent.remaining_energy <= 0.0 && !agent.depleted)
                {
                    agent.depleted = true;
                    report.events.push_back(json{{"type", "EnergyDepleted"}, {"agent", agent.id}});
                }
            }
            for (std::size_t i = 0; i < world.agents.size(); ++i)
            {
                const auto &agent = world.agents[i];
                if (!agent.current_task)
                    continue;
                const auto t = *world.target_index(*agent.current_task);
                if (!world.targets[t].unknown())
                    continue;
                if (haversine_distance(agent.position, world.target_spec(t).position) <= world.agent_spec(i).arrival_radius)
                    report.events.push_back(classified_event(auto_resolve(world, agent.id, world.targets[t].id)));
            }

            ++world.tick;
            world.sim_time = static_cast<double>(world.tick) * dt;
            world.tally.elapsed = world.sim_time;
            report.advanced = true;
            reallocate_if_dirty(world, params, report.events);
        }
        report.sim_time = world.sim_time;
        return report;
    }

    Score compute_score(const ScoreTally &tally)
    {
        if (!(tally.elapsed > 0.0))
            throw ZeroElapsed();
        Score s;
        const double minutes = tally.elapsed / 60.0;
        s.rate = static_cast<double>(tally.classifications) / minutes;
        s.accuracy = tally.classifications == 0
                         ? 0.0
                         : static_cast<double>(tally.correct) / static_cast<double>(tally.classifications);
        s.score = s.rate * s.accuracy;
        return s;
    }

    json operator_snapshot(const WorldState &world, bool include_images)
    {
        json agents = json::array();
        for (const auto &a : world.agents)
        {
            agents.push_back({{"id", a.id},
                              {"position", position_json(a.position)},
                              {"remaining_energy", a.remaining_energy},
                              {"depleted", a.depleted},
                              {"current_task", a.current_task ? json(*a.current_task) : json(nullptr)},
                              {"schedule", a.schedule}});
        }

        json targets = json::array();
        json feeds = json::array();
        for (std::size_t t = 0; t < world.targets.size(); ++t)
        {
            const auto &rt = world.targets[t];
            json entry = {{"id", rt.id}, {"position", position_json(world.target_spec(t).position)}};
            if (rt.unknown())
            {
                entry["state"] = "Unknown";
                if (auto feed = feed_for(world, rt.id))
                {
                    json f = to_json(*feed);
                    if (!include_images)
                        f.erase("image");
                    feeds.push_back(std::move(f));
                }
            }
            else
            {
                entry["state"] = "Classified";
                entry["label"] = to_string(rt.classification->label);
                entry["classified_by"] = to_json(rt.classification->actor);
                entry["classified_at"] = rt.classification->sim_time;
            }
            targets.push_back(std::move(entry));
        }

        json hazards = json::array();
        for (const auto &h : world.scenario->hazards)
            hazards.push_back({{"id", h.id}, {"center", position_json(h.center)}, {"radius", h.radius}});

        json constraints = json::array();
        for (const auto &c : world.constraints)
            constraints.push_back(to_json(c));

        json score = to_json(world.tally);
        const Score s = world.tally.elapsed > 0.0 ? compute_score(world.tally) : Score{};
        score["rate"] = s.rate;
        score["accuracy"] = s.accuracy;
        score["score"] = s.score;

        return json{{"tick", world.tick},
                    {"sim_time", world.sim_time},
                    {"mode", to_string(world.mode)},
                    {"paused", world.paused},
                    {"complete", run_complete(world)},
                    {"agents", std::move(agents)},
                    {"targets", std::move(targets)},
                    {"hazards", std::move(hazards)},
                    {"feeds", std::move(feeds)},
                    {"allocation", to_json(world.allocation)},
                    {"constraints", std::move(constraints)},
                    {"score", std::move(score)}};
    }

    std::vector<Command> HumanPolicy::decide(const WorldState &world) const
    {
        std::vector<Command> out;
        if (world.mode != Mode::HumanTeaming)
            return out;
        for (std::size_t t = 0; t < world.targets.size(); ++t)
        {
            const auto sighting = best_sighting(world, world.targets[t].id);
            if (!sighting || sighting->clarity < threshold)
                continue;
            out.push_back(Command{ClassifyCommand{Actor::human(client_id), world.targets[t].id, world.target_spec(t).ground_truth},
                                  client_id, 0});
        }
        return out;
    }

    json to_json(const ScoreTally &t)
    {
        return json{{"classifications", t.classifications}, {"correct", t.correct}, {"elapsed", t.elapsed}};
    }

    ScoreTally tally_from_json(const json &j)
    {
        return ScoreTally{j.at("classifications").get<std::uint64_t>(), j.at("correct").get<std::uint64_t>(),
                          j.at("elapsed").get<double>()};
    }

    json to_json(const Command &c)
    {
        json j = std::visit(
            [](const auto &body) -> json
            {
                using T = std::decay_t<decltype(body)>;
                if constexpr (std::is_same_v<T, ClassifyCommand>)
                    return {{"type", "Classify"}, {"actor", to_json(body.actor)}, {"target", body.target}, {"label", to_string(body.label)}};
                else if constexpr (std::is_same_v<T, ReassignCommand>)
                    return {{"type", "Reassign"}, {"agent", body.agent}, {"target", body.target ? json(*body.target) : json(nullptr)}};
                else if constexpr (std::is_same_v<T, SetModeCommand>)
                    return {{"type", "SetMode"}, {"mode", to_string(body.mode)}};
                else if constexpr (std::is_same_v<T, PauseCommand>)
                    return {{"type", "Pause"}};
                else
                    return {{"type", "Resume"}};
            },
            c.body);
        j["issued_by"] = c.issued_by;
        j["seq"] = c.seq;
        return j;
    }

    namespace
    {
        const json &field(const json &j, const char *key)
        {
            auto it = j.find(key);
            if (it == j.end())
                throw CommandFormatError(std::string("command is missing '") + key + "'");
            return *it;
        }

        std::string string_field(const json &j, const char *key)
        {
            const json &v = field(j, key);
            if (!v.is_string())
                throw CommandFormatError(std::string("command field '") + key + "' must be a string");
            return v.get<std::string>();
        }

        std::optional<std::string> nullable_string(const json &j, const char *key)
        {
            const json &v = field(j, key);
            if (v.is_null())
                return std::nullopt;
            if (!v.is_string())
                throw CommandFormatError(std::string("command field '") + key + "' must be a string or null");
            return v.get<std::string>();
        }

        void allow_only(const json &j, std::initializer_list<const char *> keys)
        {
            for (const auto &[k, _] : j.items())
            {
                bool ok = k == "type" || k == "issued_by" || k == "seq";
                for (const char *allowed : keys)
                    ok = ok || k == allowed;
                if (!ok)
                    throw CommandFormatError("unknown command field '" + k + "'");
            }
        }
    }

    Command command_from_json(const json &j)
    {
        if (!j.is_object())
            throw CommandFormatError("command must be a JSON object");
        const std::string type = string_field(j, "type");
        Command c;
        try
        {
            if (type == "Classify")
            {
                allow_only(j, {"actor", "target", "label"});
                ClassifyCommand body;
                body.target = string_field(j, "target");
                body.label = ground_truth_from_string(string_field(j, "label"));
                if (auto it = j.find("actor"); it != j.end())
                {
                    const std::string kind = string_field(*it, "kind");
                    if (kind != "Human" && kind != "Autonomous")
                        throw CommandFormatError("actor kind must be Human or Autonomous");
                    body.actor = Actor{kind == "Human" ? Actor::Kind::Human : Actor::Kind::Autonomous, string_field(*it, "id")};
                }
                c.body = std::move(body);
            }
            else if (type == "Reassign")
            {
                allow_only(j, {"agent", "target"});
                c.body = ReassignCommand{string_field(j, "agent"), nullable_string(j, "target")};
            }
            else if (type == "SetMode")
            {
                allow_only(j, {"mode"});
                c.body = SetModeCommand{mode_from_string(string_field(j, "mode"))};
            }
            else if (type == "Pause")
            {
                allow_only(j, {});
                c.body = PauseCommand{};
            }
            else if (type == "Resume")
            {
                allow_only(j, {});
                c.body = ResumeCommand{};
            }
            else
            {
                throw CommandFormatError("unknown command type '" + type + "'");
            }
        }
        catch (const std::invalid_argument &e)
        {
            throw CommandFormatError(e.what());
        }
        if (auto it = j.find("issued_by"); it != j.end() && it->is_string())
            c.issued_by = it->get<std::string>();
        if (auto it = j.find("seq"); it != j.end() && it->is_number_unsigned())
            c.seq = it->get<std::uint64_t>();
        return c;
    }

    Command command_from_client_frame(const json &frame, const std::string &client_id)
    {
        Command c = command_from_json(frame);
        c.issued_by = client_id;
        c.seq = 0;
        if (auto *classify = std::get_if<ClassifyCommand>(&c.body))
            classify->actor = Actor::human(client_id);
        return c;
    }

    Engine::Engine(Scenario scenario, EngineParams params)
        : m_world(make_world(std::make_shared<const Scenario>(std::move(scenario)))), m_params(params)
    {
    }

    TickReport Engine::step(std::span<const Command> pending)
    {
        return tick(m_world, dt(), pending, m_params);
    }
}
