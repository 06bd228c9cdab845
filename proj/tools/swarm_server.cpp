#include "swarm/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace
{
    volatile std::sig_atomic_t g_stop = 0;
}

int main(int argc, char **argv)
{
    CLI::App app{"Session service for the swarm teaming simulator"};
    std::string address = "127.0.0.1";
    std::uint16_t port = 8080;
    int threads = 2;
    std::string scenario_path;
    app.add_option("--address", address, "Listen address");
    app.add_option("--port", port, "Listen port (0 picks a free one)");
    app.add_option("--threads", threads, "I/O threads")->check(CLI::PositiveNumber);
    app.add_option("--scenario", scenario_path, "Create one session from this file at startup");
    CLI11_PARSE(app, argc, argv);

    swarm::SessionManager sessions;
    if (!scenario_path.empty())
    {
        try
        {
            std::ifstream in(scenario_path, std::ios::binary);
            if (!in)
                throw std::runtime_error("cannot read file");
            std::ostringstream ss;
            ss << in.rdbuf();
            auto session = sessions.create(swarm::parse_scenario(ss.str()));
            std::fprintf(stderr, "created session %s\n", session->id().c_str());
        }
        catch (const std::exception &e)
        {
            std::fprintf(stderr, "%s: %s\n", scenario_path.c_str(), e.what());
            return 1;
        }
    }

    swarm::Server server(sessions, address, port);
    try
    {
        server.start(threads);
    }
    catch (const std::exception &e)
    {
        std::fprintf(stderr, "cannot listen on %s:%u: %s\n", address.c_str(), port, e.what());
        return 2;
    }
    std::fprintf(stderr, "listening on %s:%u\n", address.c_str(), server.port());

    std::signal(SIGINT, [](int) { g_stop = 1; });
    std::signal(SIGTERM, [](int) { g_stop = 1; });
    while (!g_stop)
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
}
