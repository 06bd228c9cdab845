#pragma once

#include "swarm/engine.hpp"

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace swarm
{
    enum class EnvelopeKind : std::uint8_t
    {
        Snapshot,
        Event,
        CommandAck,
        CommandReject,
        Hello,
    };

    std::string_view to_string(EnvelopeKind k) noexcept;
    EnvelopeKind envelope_kind_from_string(std::string_view s);

    struct Envelope
    {
        std::uint64_t seq = 0;
        EnvelopeKind kind = EnvelopeKind::Snapshot;
        nlohmann::json payload;
        double sim_time = 0.0;
        std::string text; // serialized frame, shared by every recipient

        nlohmann::json to_json() const;
        static Envelope from_json(const nlohmann::json &j);
    };

    using EnvelopePtr = std::shared_ptr<const Envelope>;

    inline constexpr std::size_t kClientBuffer = 64;

    // Bounded per-client outbox. Envelopes stay buffered until the consumer
    // pops them; a publisher finding the buffer full disconnects the client.
    class Subscriber
    {
    public:
        Subscriber(std::string client_id, std::size_t capacity = kClientBuffer);

        const std::string &client_id() const noexcept { return m_client; }

        EnvelopePtr try_pop();
        EnvelopePtr peek();
        void pop_front();
        // Null on timeout or once closed and drained.
        EnvelopePtr wait_pop(std::chrono::milliseconds timeout);

        bool closed() const;
        std::size_t buffered() const;
        void close();

        // Callbacks run on the publishing thread; keep them short.
        void set_callbacks(std::function<void()> on_ready, std::function<void()> on_closed);

    private:
        friend class Session;
        // False when the buffer was full and the subscriber got closed.
        bool offer(EnvelopePtr env);

        std::string m_client;
        std::size_t m_capacity;
        mutable std::mutex m_mutex;
        std::condition_variable m_cv;
        std::deque<EnvelopePtr> m_queue;
        bool m_closed = false;
        std::function<void()> m_on_ready;
        std::function<void()> m_on_closed;
    };

    enum class SessionErrorKind : std::uint8_t
    {
        UnknownSession,
        NotJoined,
        MalformedCommand,
    };

    std::string_view to_string(SessionErrorKind k) noexcept;

    class SessionError : public std::runtime_error
    {
    public:
        SessionError(SessionErrorKind kind, const std::string &detail);
        SessionErrorKind kind() const noexcept { return m_kind; }

    private:
        SessionErrorKind m_kind;
    };

    // One scenario instance shared by any number of clients. All commands go
    // through one queue into the engine, which a single thread advances.
    class Session
    {
    public:
        Session(std::string id, Scenario scenario, EngineParams params = {});
        ~Session();

        Session(const Session &) = delete;
        Session &operator=(const Session &) = delete;

        const std::string &id() const noexcept { return m_id; }
        const Scenario &scenario() const noexcept { return m_engine.scenario(); }

        // Subscribes a stream client; its first envelope is a Hello carrying
        // the latest snapshot at the current head seq. Assigns an id when empty.
        std::shared_ptr<Subscriber> join(std::string client_id = {});
        // Registers a command-only client with no stream.
        std::string register_client();
        void leave(const std::string &client_id);
        bool is_joined(const std::string &client_id) const;

        // Queues a command for the next tick; returns its server-assigned seq.
        std::uint64_t ingest(const std::string &client_id, CommandBody body);
        std::uint64_t ingest_frame(const std::string &client_id, const nlohmann::json &frame);
        // Commands from the service itself (e.g. the mode endpoint).
        std::uint64_t submit_service(CommandBody body);

        // Applies queued commands and advances one tick if running. Broadcasts
        // acks/rejects, events and one snapshot. Returns false when idle.
        bool step();

        EnvelopePtr latest_snapshot() const;
        std::uint64_t head_seq() const;
        std::vector<std::string> dropped_clients() const;

        // Paces step() at the scenario tick rate on a background thread.
        void start();
        void stop();
        // Closes every stream subscriber.
        void close_clients();

    private:
        EnvelopePtr publish(EnvelopeKind kind, nlohmann::json payload, double sim_time);
        nlohmann::json snapshot_payload() const;

        std::string m_id;
        Engine m_engine;
        std::mutex m_step_mutex;

        mutable std::mutex m_queue_mutex;
        std::vector<Command> m_pending;
        std::uint64_t m_command_seq = 0;
        std::set<std::string> m_clients;
        std::uint64_t m_next_client = 0;

        mutable std::mutex m_hub_mutex;
        std::uint64_t m_seq = 0;
        std::vector<std::shared_ptr<Subscriber>> m_subscribers;
        EnvelopePtr m_latest_snapshot;
        std::vector<std::string> m_dropped;

        std::jthread m_clock;
    };

    class SessionManager
    {
    public:
        // When paced, every new session gets its own tick thread.
        explicit SessionManager(bool paced = true) : m_paced(paced) {}

        std::shared_ptr<Session> create(Scenario scenario);
        std::shared_ptr<Session> find(const std::string &id) const;
        bool close(const std::string &id);
        std::vector<std::string> ids() const;

    private:
        bool m_paced;
        mutable std::mutex m_mutex;
        std::map<std::string, std::shared_ptr<Session>> m_sessions;
        std::uint64_t m_next = 0;
    };
}
