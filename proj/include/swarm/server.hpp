#pragma once

#include "swarm/session.hpp"

#include <boost/asio/io_context.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <thread>

namespace swarm
{
    // HTTP control API plus a WebSocket stream per session:
    //   POST   /sessions                  create from a scenario body (empty = default)
    //   GET    /sessions                  list ids
    //   GET    /sessions/{id}/state       latest Snapshot envelope
    //   POST   /sessions/{id}/join        register a command-only client
    //   POST   /sessions/{id}/commands    {client_id, command}
    //   POST   /sessions/{id}/mode        {mode}
    //   DELETE /sessions/{id}
    //   GET    /sessions/{id}/stream      WebSocket upgrade
    class Server
    {
    public:
        Server(SessionManager &sessions, std::string address = "127.0.0.1", std::uint16_t port = 0);
        ~Server();

        Server(const Server &) = delete;
        Server &operator=(const Server &) = delete;

        // Binds and starts serving on `threads` I/O threads.
        void start(int threads = 1);
        void stop();
        // Actual bound port, valid after start().
        std::uint16_t port() const noexcept { return m_port; }

    private:
        struct Listener;

        SessionManager &m_sessions;
        std::string m_address;
        std::uint16_t m_port;
        boost::asio::io_context m_ioc;
        std::shared_ptr<Listener> m_listener;
        std::vector<std::jthread> m_threads;
    };
}
