#include "swarm/server.hpp"

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <cstdio>
#include <optional>
#include <sstream>
#include <string_view>

namespace swarm
{
    namespace asio = boost::asio;
    namespace beast = boost::beast;
    namespace http = beast::http;
    namespace websocket = beast::websocket;
    using tcp = asio::ip::tcp;
    using nlohmann::json;

    namespace
    {
        using Request = http::request<http::string_body>;
        using Response = http::response<http::string_body>;

        Response make_response(const Request &req, http::status status, const json &body)
        {
            Response res{status, req.version()};
            res.set(http::field::content_type, "application/json");
            res.keep_alive(req.keep_alive());
            res.body() = body.is_null() ? std::string{} : body.dump();
            res.prepare_payload();
            return res;
        }

        json error_body(std::string_view error, std::string_view message, std::string_view path = {})
        {
            json j{{"error", error}, {"message", message}};
            if (!path.empty())
                j["path"] = path;
            return j;
        }

        std::vector<std::string_view> split_path(std::string_view target)
        {
            if (auto q = target.find('?'); q != std::string_view::npos)
                target = target.substr(0, q);
            std::vector<std::string_view> parts;
            while (!target.empty())
            {
                if (target.front() == '/')
                {
                    target.remove_prefix(1);
                    continue;
                }
                auto end = target.find('/');
                parts.push_back(target.substr(0, end));
                target = end == std::string_view::npos ? std::string_view{} : target.substr(end);
            }
            return parts;
        }

        std::string query_param(const std::string &target, const std::string &key)
        {
            const auto q = target.find('?');
            if (q == std::string::npos)
                return {};
            std::istringstream query(target.substr(q + 1));
            std::string pair;
            while (std::getline(query, pair, '&'))
            {
                const auto eq = pair.find('=');
                if (eq != std::string::npos && pair.compare(0, eq, key) == 0)
                    return pair.substr(eq + 1);
            }
            return {};
        }

        std::string_view target_of(const Request &req)
        {
            const auto t = req.target();
            return {t.data(), t.size()};
        }

        json parse_body(const Request &req)
        {
            return json::parse(req.body());
        }

        Response handle(SessionManager &sessions, const Request &req)
        {
            const auto parts = split_path(target_of(req));
            const auto method = req.method();
            if (parts.empty() || parts[0] != "sessions")
                return make_response(req, http::status::not_found, error_body("NotFound", "no such route"));

            try
            {
                if (parts.size() == 1)
                {
                    if (method == http::verb::get)
                        return make_response(req, http::status::ok, json{{"sessions", sessions.ids()}});
                    if (method == http::verb::post)
                    {
                        std::optional<Scenario> scenario;
                        try
                        {
                            scenario = req.body().empty() ? default_scenario() : parse_scenario(req.body());
                        }
                        catch (const ScenarioError &e)
                        {
                            return make_response(req, http::status::bad_request,
                                                 error_body(to_string(e.kind()), e.what(), e.path()));
                        }
                        auto session = sessions.create(std::move(*scenario));
                        return make_response(req, http::status::created, json{{"session_id", session->id()}});
                    }
                    return make_response(req, http::status::method_not_allowed, error_body("MethodNotAllowed", "use GET or POST"));
                }

                const std::string id(parts[1]);
                auto session = sessions.find(id);
                if (!session)
                    return make_response(req, http::status::not_found,
                                         error_body(to_string(SessionErrorKind::UnknownSession), "no session '" + id + "'"));

                if (parts.size() == 2)
                {
                    if (method == http::verb::delete_)
                    {
                        sessions.close(id);
                        return make_response(req, http::status::no_content, json());
                    }
                    return make_response(req, http::status::method_not_allowed, error_body("MethodNotAllowed", "use DELETE"));
                }

                const std::string_view action = parts[2];
                if (parts.size() == 3 && action == "state" && method == http::verb::get)
                {
                    auto snap = session->latest_snapshot();
                    Response res = make_response(req, http::status::ok, json());
                    res.body() = snap->text;
                    res.prepare_payload();
                    return res;
                }
                if (parts.size() == 3 && action == "join" && method == http::verb::post)
                    return make_response(req, http::status::created, json{{"client_id", session->register_client()}});
                if (parts.size() == 3 && action == "commands" && method == http::verb::post)
                {
                    const json body = parse_body(req);
                    if (!body.is_object() || !body.contains("client_id") || !body["client_id"].is_string() ||
                        !body.contains("command"))
                        return make_response(req, http::status::bad_request,
                                             error_body("MalformedCommand", "body must be {client_id, command}"));
                    const auto seq = session->ingest_frame(body["client_id"].get<std::string>(), body["command"]);
                    return make_response(req, http::status::accepted, json{{"command_seq", seq}});
                }
                if (parts.size() == 3 && action == "mode" && method == http::verb::post)
                {
                    const json body = parse_body(req);
                    Mode mode;
                    try
                    {
                        mode = mode_from_string(body.at("mode").get<std::string>());
                    }
                    catch (const std::exception &e)
                    {
                        return make_response(req, http::status::bad_request, error_body("MalformedCommand", e.what(), "mode"));
                    }
                    const auto seq = session->submit_service(SetModeCommand{mode});
                    return make_response(req, http::status::accepted, json{{"command_seq", seq}});
                }
                return make_response(req, http::status::not_found, error_body("NotFound", "no such route"));
            }
            catch (const SessionError &e)
            {
                const auto status =
                    e.kind() == SessionErrorKind::NotJoined ? http::status::forbidden : http::status::bad_request;
                return make_response(req, status, error_body(to_string(e.kind()), e.what()));
            }
            catch (const json::exception &e)
            {
                return make_response(req, http::status::bad_request, error_body("MalformedJson", e.what()));
            }
        }

        // One stream client. Reads command frames; writes envelopes from its
        // Subscriber one at a time.
        class StreamConnection : public std::enable_shared_from_this<StreamConnection>
        {
        public:
            StreamConnection(tcp::socket &&socket, std::shared_ptr<Session> session, std::string client_id)
                : m_ws(std::move(socket)), m_session(std::move(session)), m_client(std::move(client_id))
            {
            }

            void run(Request req)
            {
                websocket::stream_base::timeout timeouts{};
                timeouts.handshake_timeout = std::chrono::seconds(2);
                timeouts.idle_timeout = websocket::stream_base::none();
                timeouts.keep_alive_pings = false;
                m_ws.set_option(timeouts);
                m_req = std::move(req);
                m_ws.async_accept(m_req, beast::bind_front_handler(&StreamConnection::on_accept, shared_from_this()));
            }

        private:
            void on_accept(beast::error_code ec)
            {
                if (ec)
                    return;
                m_ws.text(true);
                m_sub = m_session->join(m_client);
                m_client = m_sub->client_id();
                std::weak_ptr<StreamConnection> weak = shared_from_this();
                auto executor = m_ws.get_executor();
                m_sub->set_callbacks(
                    [weak, executor]
                    {
                        asio::post(executor,
                                   [weak]
                                   {
                                       if (auto self = weak.lock())
                                           self->pump();
                                   });
                    },
                    [weak, executor]
                    {
                        asio::post(executor,
                                   [weak]
                                   {
                                       if (auto self = weak.lock())
                                           self->shutdown();
                                   });
                    });
                pump();
                do_read();
            }

            void do_read()
            {
                m_ws.async_read(m_in, beast::bind_front_handler(&StreamConnection::on_read, shared_from_this()));
            }

            void on_read(beast::error_code ec, std::size_t)
            {
                if (ec)
                {
                    finish();
                    return;
                }
                const std::string text = beast::buffers_to_string(m_in.data());
                m_in.consume(m_in.size());
                try
                {
                    m_session->ingest_frame(m_client, json::parse(text));
                }
                catch (const std::exception &e)
                {
                    std::fprintf(stderr, "session %s: ignored frame from %s: %s\n", m_session->id().c_str(),
                                 m_client.c_str(), e.what());
                }
                do_read();
            }

            void pump()
            {
                if (m_writing || m_closing)
                    return;
                m_current = m_sub->try_pop();
                if (!m_current)
                {
                    if (m_sub->closed())
                        shutdown();
                    return;
                }
                m_writing = true;
                m_ws.async_write(asio::buffer(m_current->text),
                                 beast::bind_front_handler(&StreamConnection::on_write, shared_from_this()));
            }

            void on_write(beast::error_code ec, std::size_t)
            {
                m_writing = false;
                m_current.reset();
                if (ec)
                {
                    finish();
                    return;
                }
                pump();
            }

            void shutdown()
            {
                if (m_closing)
                    return;
                m_closing = true;
                if (m_writing)
                {
                    // A stalled write would hold the close frame back indefinitely.
                    finish();
                    return;
                }
                m_ws.async_close(websocket::close_reason(websocket::close_code::policy_error, "disconnected"),
                                 [self = shared_from_this()](beast::error_code) { self->finish(); });
            }

            void finish()
            {
                if (m_finished)
                    return;
                m_finished = true;
                if (m_sub)
                {
                    m_sub->set_callbacks(nullptr, nullptr);
                    m_session->leave(m_client);
                }
                beast::error_code ignored;
                beast::get_lowest_layer(m_ws).socket().close(ignored);
            }

            websocket::stream<beast::tcp_stream> m_ws;
            std::shared_ptr<Session> m_session;
            std::string m_client;
            Request m_req;
            beast::flat_buffer m_in;
            std::shared_ptr<Subscriber> m_sub;
            EnvelopePtr m_current;
            bool m_writing = false;
            bool m_closing = false;
            bool m_finished = false;
        };

        class HttpConnection : public std::enable_shared_from_this<HttpConnection>
        {
        public:
            HttpConnection(tcp::socket &&socket, SessionManager &sessions)
                : m_stream(std::move(socket)), m_sessions(sessions)
            {
            }

            void run()
            {
                asio::dispatch(m_stream.get_executor(),
                               beast::bind_front_handler(&HttpConnection::do_read, shared_from_this()));
            }

        private:
            void do_read()
            {
                m_req = {};
                m_stream.expires_after(std::chrono::seconds(30));
                http::async_read(m_stream, m_buffer, m_req,
                                 beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
            }

            void on_read(beast::error_code ec, std::size_t)
            {
                if (ec)
                {
                    m_stream.socket().shutdown(tcp::socket::shutdown_send, ec);
                    return;
                }
                if (websocket::is_upgrade(m_req))
                {
                    const auto parts = split_path(target_of(m_req));
                    std::shared_ptr<Session> session;
                    if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "stream")
                        session = m_sessions.find(std::string(parts[1]));
                    if (!session)
                    {
                        m_res = make_response(m_req, http::status::not_found,
                                              error_body(to_string(SessionErrorKind::UnknownSession), "no such stream"));
                        m_res.keep_alive(false);
                        write();
                        return;
                    }
                    m_stream.expires_never();
                    std::make_shared<StreamConnection>(m_stream.release_socket(), std::move(session),
                                                       query_param(std::string(target_of(m_req)), "client_id"))
                        ->run(std::move(m_req));
                    return;
                }
                m_res = handle(m_sessions, m_req);
                write();
            }

            void write()
            {
                http::async_write(m_stream, m_res, beast::bind_front_handler(&HttpConnection::on_write, shared_from_this()));
            }

            void on_write(beast::error_code ec, std::size_t)
            {
                if (ec)
                    return;
                if (!m_res.keep_alive())
                {
                    m_stream.socket().shutdown(tcp::socket::shutdown_send, ec);
                    return;
                }
                do_read();
            }

            beast::tcp_stream m_stream;
            beast::flat_buffer m_buffer;
            SessionManager &m_sessions;
            Request m_req;
            Response m_res;
        };
    }

    struct Server::Listener : std::enable_shared_from_this<Server::Listener>
    {
        Listener(asio::io_context &ioc, SessionManager &sessions, tcp::endpoint endpoint)
            : ioc(ioc), acceptor(asio::make_strand(ioc)), sessions(sessions)
        {
            acceptor.open(endpoint.protocol());
            acceptor.set_option(asio::socket_base::reuse_address(true));
            acceptor.bind(endpoint);
            acceptor.listen(asio::socket_base::max_listen_connections);
        }

        void accept()
        {
            acceptor.async_accept(asio::make_strand(ioc),
                                  [self = shared_from_this()](beast::error_code ec, tcp::socket socket)
                                  {
                                      if (ec)
                                          return;
                                      std::make_shared<HttpConnection>(std::move(socket), self->sessions)->run();
                                      self->accept();
                                  });
        }

        asio::io_context &ioc;
        tcp::acceptor acceptor;
        SessionManager &sessions;
    };

    Server::Server(SessionManager &sessions, std::string address, std::uint16_t port)
        : m_sessions(sessions), m_address(std::move(address)), m_port(port)
    {
    }

    Server::~Server()
    {
        stop();
    }

    void Server::start(int threads)
    {
        const tcp::endpoint endpoint{asio::ip::make_address(m_address), m_port};
        m_listener = std::make_shared<Listener>(m_ioc, m_sessions, endpoint);
        m_port = m_listener->acceptor.local_endpoint().port();
        m_listener->accept();
        for (int i = 0; i < std::max(threads, 1); ++i)
            m_threads.emplace_back([this] { m_ioc.run(); });
    }

    void Server::stop()
    {
        if (m_threads.empty())
            return;
        m_ioc.stop();
        m_threads.clear();
        m_listener.reset();
    }
}
