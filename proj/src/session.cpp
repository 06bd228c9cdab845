#include "swarm/session.hpp"

#include <cstdio>

namespace swarm
{
    using nlohmann::json;

    std::string_view to_string(EnvelopeKind k) noexcept
    {
        switch (k)
        {
        case EnvelopeKind::Snapshot:
            return "Snapshot";
        case EnvelopeKind::Event:
            return "Event";
        case EnvelopeKind::CommandAck:
            return "CommandAck";
        case EnvelopeKind::CommandReject:
            return "CommandReject";
        case EnvelopeKind::Hello:
            return "Hello";
        }
        return "?";
    }

    EnvelopeKind envelope_kind_from_string(std::string_view s)
    {
        for (auto k : {EnvelopeKind::Snapshot, EnvelopeKind::Event, EnvelopeKind::CommandAck, EnvelopeKind::CommandReject,
                       EnvelopeKind::Hello})
            if (to_string(k) == s)
                return k;
        throw std::invalid_argument("unknown envelope kind '" + std::string(s) + "'");
    }

    json Envelope::to_json() const
    {
        return json{{"seq", seq}, {"kind", to_string(kind)}, {"payload", payload}, {"sim_time", sim_time}};
    }

    Envelope Envelope::from_json(const json &j)
    {
        Envelope e;
        e.seq = j.at("seq").get<std::uint64_t>();
        e.kind = envelope_kind_from_string(j.at("kind").get<std::string>());
        e.payload = j.at("payload");
        e.sim_time = j.at("sim_time").get<double>();
        e.text = j.dump();
        return e;
    }

    Subscriber::Subscriber(std::string client_id, std::size_t capacity)
        : m_client(std::move(client_id)), m_capacity(capacity)
    {
    }

    EnvelopePtr Subscriber::try_pop()
    {
        std::lock_guard lock(m_mutex);
        if (m_queue.empty())
            return nullptr;
        auto env = std::move(m_queue.front());
        m_queue.pop_front();
        return env;
    }

    EnvelopePtr Subscriber::peek()
    {
        std::lock_guard lock(m_mutex);
        return m_queue.empty() ? nullptr : m_queue.front();
    }

    void Subscriber::pop_front()
    {
        std::lock_guard lock(m_mutex);
        if (!m_queue.empty())
            m_queue.pop_front();
    }

    EnvelopePtr Subscriber::wait_pop(std::chrono::milliseconds timeout)
    {
        std::unique_lock lock(m_mutex);
        m_cv.wait_for(lock, timeout, [&] { return !m_queue.empty() || m_closed; });
        if (m_queue.empty())
            return nullptr;
        auto env = std::move(m_queue.front());
        m_queue.pop_front();
        return env;
    }

    bool Subscriber::closed() const
    {
        std::lock_guard lock(m_mutex);
        return m_closed;
    }

    std::size_t Subscriber::buffered() const
    {
        std::lock_guard lock(m_mutex);
        return m_queue.size();
    }

    void Subscriber::close()
    {
        std::function<void()> on_closed;
        {
            std::lock_guard lock(m_mutex);
            if (m_closed)
                return;
            m_closed = true;
            on_closed = m_on_closed;
        }
        m_cv.notify_all();
        if (on_closed)
            on_closed();
    }

    void Subscriber::set_callbacks(std::function<void()> on_ready, std::function<void()> on_closed)
    {
        std::lock_guard lock(m_mutex);
        m_on_ready = std::move(on_ready);
        m_on_closed = std::move(on_closed);
    }

    bool Subscriber::offer(EnvelopePtr env)
    {
        std::function<void()> on_ready;
        {
            std::lock_guard lock(m_mutex);
            if (m_closed)
                return false;
            if (m_queue.size() >= m_capacity)
            {
                // Drop the backlog: the client reconnects and resumes from Hello.
                m_queue.clear();
                return false;
            }
            m_queue.push_back(std::move(env));
            on_ready = m_on_ready;
        }
        m_cv.notify_all();
        if (on_ready)
            on_ready();
        return true;
    }

    std::string_view to_string(SessionErrorKind k) noexcept
    {
        switch (k)
        {
        case SessionErrorKind::UnknownSession:
            return "UnknownSession";
        case SessionErrorKind::NotJoined:
            return "NotJoined";
        case SessionErrorKind::MalformedCommand:
            return "MalformedCommand";
        }
        return "?";
    }

    SessionError::SessionError(SessionErrorKind kind, const std::string &detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail), m_kind(kind)
    {
    }

    Session::Session(std::string id, Scenario scenario, EngineParams params)
        : m_id(std::move(id)), m_engine(std::move(scenario), params)
    {
        m_engine.set_paused(true);
        publish(EnvelopeKind::Snapshot, snapshot_payload(), m_engine.world().sim_time);
    }

    Session::~Session()
    {
        stop();
        close_clients();
    }

    void Session::close_clients()
    {
        std::vector<std::shared_ptr<Subscriber>> subs;
        {
            std::lock_guard lock(m_hub_mutex);
            subs.swap(m_subscribers);
        }
        for (auto &s : subs)
            s->close();
    }

    json Session::snapshot_payload() const
    {
        return operator_snapshot(m_engine.world());
    }

    EnvelopePtr Session::publish(EnvelopeKind kind, json payload, double sim_time)
    {
        std::vector<std::shared_ptr<Subscriber>> overflowed;
        EnvelopePtr env;
        {
            std::lock_guard lock(m_hub_mutex);
            auto e = std::make_shared<Envelope>();
            e->seq = ++m_seq;
            e->kind = kind;
            e->payload = std::move(payload);
            e->sim_time = sim_time;
            e->text = e->to_json().dump();
            env = std::move(e);
            if (kind == EnvelopeKind::Snapshot)
                m_latest_snapshot = env;

            std::erase_if(m_subscribers,
                          [&](const std::shared_ptr<Subscriber> &s)
                          {
                              if (s->offer(env))
                                  return false;
                              if (!s->closed())
                              {
                                  overflowed.push_back(s);
                                  m_dropped.push_back(s->client_id());
                              }
                              return true;
                          });
        }
        for (auto &s : overflowed)
        {
            std::fprintf(stderr, "session %s: client %s exceeded %zu buffered envelopes, disconnecting\n", m_id.c_str(),
                         s->client_id().c_str(), kClientBuffer);
            s->close();
        }
        return env;
    }

    std::shared_ptr<Subscriber> Session::join(std::string client_id)
    {
        {
            std::lock_guard lock(m_queue_mutex);
            if (client_id.empty())
                client_id = "c" + std::to_string(++m_next_client);
            m_clients.insert(client_id);
        }
        auto sub = std::make_shared<Subscriber>(client_id);
        std::lock_guard lock(m_hub_mutex);
        auto hello = std::make_shared<Envelope>();
        hello->seq = m_seq;
        hello->kind = EnvelopeKind::Hello;
        hello->sim_time = m_latest_snapshot->sim_time;
        hello->payload = json{{"client_id", client_id}, {"session_id", m_id}, {"snapshot", m_latest_snapshot->payload}};
        hello->text = hello->to_json().dump();
        sub->offer(std::move(hello));
        m_subscribers.push_back(sub);
        return sub;
    }

    std::string Session::register_client()
    {
        std::lock_guard lock(m_queue_mutex);
        std::string id = "c" + std::to_string(++m_next_client);
        m_clients.insert(id);
        return id;
    }

    void Session::leave(const std::string &client_id)
    {
        {
            std::lock_guard lock(m_queue_mutex);
            m_clients.erase(client_id);
        }
        std::shared_ptr<Subscriber> gone;
        {
            std::lock_guard lock(m_hub_mutex);
            for (auto it = m_subscribers.begin(); it != m_subscribers.end(); ++it)
            {
                if ((*it)->client_id() == client_id)
                {
                    gone = *it;
                    m_subscribers.erase(it);
                    break;
                }
            }
        }
        if (gone)
            gone->close();
    }

    bool Session::is_joined(const std::string &client_id) const
    {
        std::lock_guard lock(m_queue_mutex);
        return m_clients.contains(client_id);
    }

    std::uint64_t Session::ingest(const std::string &client_id, CommandBody body)
    {
        std::lock_guard lock(m_queue_mutex);
        if (!m_clients.contains(client_id))
            throw SessionError(SessionErrorKind::NotJoined, "client '" + client_id + "' has not joined session " + m_id);
        if (auto *classify = std::get_if<ClassifyCommand>(&body))
            classify->actor = Actor::human(client_id);
        const std::uint64_t seq = ++m_command_seq;
        m_pending.push_back(Command{std::move(body), client_id, seq});
        return seq;
    }

    std::uint64_t Session::ingest_frame(const std::string &client_id, const json &frame)
    {
        Command c;
        try
        {
            c = command_from_client_frame(frame, client_id);
        }
        catch (const CommandFormatError &e)
        {
            throw SessionError(SessionErrorKind::MalformedCommand, e.what());
        }
        return ingest(client_id, std::move(c.body));
    }

    std::uint64_t Session::submit_service(CommandBody body)
    {
        std::lock_guard lock(m_queue_mutex);
        const std::uint64_t seq = ++m_command_seq;
        m_pending.push_back(Command{std::move(body), "service", seq});
        return seq;
    }

    bool Session::step()
    {
        std::lock_guard step_lock(m_step_mutex);
        std::vector<Command> pending;
        {
            std::lock_guard lock(m_queue_mutex);
            pending.swap(m_pending);
        }
        const auto &world = m_engine.world();
        if (pending.empty() && (world.paused || m_engine.complete()))
            return false;

        const TickReport report = m_engine.step(pending);
        for (const auto &o : report.outcomes)
        {
            json payload = {{"command_seq", o.seq}, {"issued_by", o.issued_by}, {"command", o.command}};
            if (o.rejected)
            {
                payload["reason"] = to_string(*o.rejected);
                publish(EnvelopeKind::CommandReject, std::move(payload), report.sim_time);
            }
            else
            {
                publish(EnvelopeKind::CommandAck, std::move(payload), report.sim_time);
            }
        }
        for (const auto &ev : report.events)
        {
            if (ev.at("type") == "Rejected")
                continue; // already carried by the CommandReject envelope
            json payload = ev;
            if (payload.at("type") == "Classified")
                payload.erase("correct");
            publish(EnvelopeKind::Event, std::move(payload), report.sim_time);
        }
        publish(EnvelopeKind::Snapshot, snapshot_payload(), report.sim_time);
        return true;
    }

    EnvelopePtr Session::latest_snapshot() const
    {
        std::lock_guard lock(m_hub_mutex);
        return m_latest_snapshot;
    }

    std::uint64_t Session::head_seq() const
    {
        std::lock_guard lock(m_hub_mutex);
        return m_seq;
    }

    std::vector<std::string> Session::dropped_clients() const
    {
        std::lock_guard lock(m_hub_mutex);
        return m_dropped;
    }

    void Session::start()
    {
        if (m_clock.joinable())
            return;
        const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / scenario().mode_config.tick_hz));
        m_clock = std::jthread(
            [this, period](std::stop_token stop)
            {
                std::mutex m;
                std::condition_variable_any cv;
                auto next = std::chrono::steady_clock::now();
                while (!stop.stop_requested())
                {
                    step();
                    next += period;
                    std::unique_lock lock(m);
                    cv.wait_until(lock, stop, next, [] { return false; });
                }
            });
    }

    void Session::stop()
    {
        if (m_clock.joinable())
        {
            m_clock.request_stop();
            m_clock.join();
        }
    }

    std::shared_ptr<Session> SessionManager::create(Scenario scenario)
    {
        validate_scenario(scenario);
        std::lock_guard lock(m_mutex);
        std::string id = "s" + std::to_string(++m_next);
        auto session = std::make_shared<Session>(id, std::move(scenario));
        if (m_paced)
            session->start();
        m_sessions.emplace(id, session);
        return session;
    }

    std::shared_ptr<Session> SessionManager::find(const std::string &id) const
    {
        std::lock_guard lock(m_mutex);
        auto it = m_sessions.find(id);
        return it == m_sessions.end() ? nullptr : it->second;
    }

    bool SessionManager::close(const std::string &id)
    {
        std::shared_ptr<Session> gone;
        {
            std::lock_guard lock(m_mutex);
            auto it = m_sessions.find(id);
            if (it == m_sessions.end())
                return false;
            gone = std::move(it->second);
            m_sessions.erase(it);
        }
        gone->stop();
        gone->close_clients();
        return true;
    }

    std::vector<std::string> SessionManager::ids() const
    {
        std::lock_guard lock(m_mutex);
        std::vector<std::string> out;
        for (const auto &[id, _] : m_sessions)
            out.push_back(id);
        return out;
    }
}
