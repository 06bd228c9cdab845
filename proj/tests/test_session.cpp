#include "support.hpp"

#include "swarm/session.hpp"

#include <doctest.h>

#include <thread>

using namespace swarm;
using nlohmann::json;
using namespace std::chrono_literals;

namespace
{
    // 'eye' hovers 50 m from 'near', so a human can classify it straight away.
    Scenario watch_scenario(Mode mode = Mode::HumanTeaming)
    {
        Scenario s;
        s.name = "watch";
        const GeoPosition o{50.0, -1.0, 0.0};
        s.agents.push_back({"eye", o, 10.0, 1e6, 300.0, 10.0});
        s.targets.push_back({"near", testing::offset(o, 0, 50), GroundTruth::Casualty, 1000.0});
        s.targets.push_back({"far", testing::offset(o, 0, 5000), GroundTruth::NoCasualty, 1000.0});
        s.mode_config.mode = mode;
        s.mode_config.rng_seed = 5;
        return s;
    }

    std::vector<EnvelopePtr> drain(Subscriber &sub)
    {
        std::vector<EnvelopePtr> out;
        while (auto e = sub.try_pop())
            out.push_back(std::move(e));
        return out;
    }

    SessionErrorKind error_kind(const std::function<void()> &f)
    {
        try
        {
            f();
        }
        catch (const SessionError &e)
        {
            return e.kind();
        }
        FAIL("expected a SessionError");
        return SessionErrorKind::UnknownSession;
    }

    const json *find_target(const json &snapshot, const std::string &id)
    {
        for (const auto &t : snapshot.at("targets"))
            if (t.at("id") == id)
                return &t;
        return nullptr;
    }
}

TEST_CASE("sessions start paused with one snapshot")
{
    Session session("s", default_scenario());
    CHECK(session.head_seq() == 1);
    REQUIRE(session.latest_snapshot());
    CHECK(session.latest_snapshot()->payload.at("paused") == true);
    CHECK_FALSE(session.step());
    CHECK(session.head_seq() == 1);
}

TEST_CASE("hello carries the latest snapshot at the head seq")
{
    Session session("s", default_scenario());
    const auto a = session.join();
    session.ingest(a->client_id(), ResumeCommand{});
    for (int i = 0; i < 3; ++i)
        session.step();
    const auto b = session.join("late");
    CHECK(b->client_id() == "late");
    const auto hello = b->try_pop();
    REQUIRE(hello);
    CHECK(hello->kind == EnvelopeKind::Hello);
    CHECK(hello->seq == session.head_seq());
    CHECK(hello->payload.at("client_id") == "late");
    CHECK(hello->payload.at("session_id") == "s");
    CHECK(hello->payload.at("snapshot") == session.latest_snapshot()->payload);
    CHECK_FALSE(b->try_pop());
}

TEST_CASE("envelopes carry consecutive seqs and one snapshot per tick")
{
    Session session("s", default_scenario());
    const auto sub = session.join();
    const std::uint64_t cmd = session.ingest(sub->client_id(), ResumeCommand{});
    CHECK(cmd == 1);
    REQUIRE(session.step());
    const auto frames = drain(*sub);
    REQUIRE(frames.size() >= 3);
    CHECK(frames[0]->kind == EnvelopeKind::Hello);
    CHECK(frames[1]->kind == EnvelopeKind::CommandAck);
    CHECK(frames[1]->payload.at("command_seq") == cmd);
    CHECK(frames[1]->payload.at("issued_by") == sub->client_id());
    CHECK(frames[1]->payload.at("command").at("type") == "Resume");
    CHECK(frames.back()->kind == EnvelopeKind::Snapshot);
    CHECK(frames.back()->payload.at("tick") == 1);
    for (std::size_t i = 2; i < frames.size(); ++i)
        CHECK(frames[i]->seq == frames[i - 1]->seq + 1);
    std::size_t snapshots = 0;
    for (const auto &f : frames)
        snapshots += f->kind == EnvelopeKind::Snapshot;
    CHECK(snapshots == 1);
    CHECK(frames.back()->seq == session.head_seq());
}

TEST_CASE("rejected commands produce a reject envelope")
{
    Session session("s", default_scenario());
    const auto sub = session.join();
    session.ingest(sub->client_id(), ClassifyCommand{{}, "t01", GroundTruth::Casualty});
    session.step();
    const auto frames = drain(*sub);
    REQUIRE(frames.size() >= 2);
    CHECK(frames[1]->kind == EnvelopeKind::CommandReject);
    CHECK(frames[1]->payload.at("reason") == "ModeForbids");
    CHECK(frames[1]->payload.at("command").at("actor").at("id") == sub->client_id());
    for (const auto &f : frames)
        if (f->kind == EnvelopeKind::Event)
            CHECK(f->payload.at("type") != "Rejected");
}

TEST_CASE("commands need a joined client")
{
    Session session("s", default_scenario());
    CHECK(error_kind([&] { session.ingest("ghost", ResumeCommand{}); }) == SessionErrorKind::NotJoined);
    const std::string c = session.register_client();
    CHECK(session.is_joined(c));
    CHECK_NOTHROW(session.ingest(c, ResumeCommand{}));
    session.leave(c);
    CHECK_FALSE(session.is_joined(c));
    CHECK(error_kind([&] { session.ingest(c, ResumeCommand{}); }) == SessionErrorKind::NotJoined);
}

TEST_CASE("malformed frames are refused before queueing")
{
    Session session("s", default_scenario());
    const auto sub = session.join();
    for (const json &frame : {json{{"type", "Fly"}}, json::array(), json{{"type", "Classify"}, {"target", "t01"}},
                              json{{"type", "SetMode"}, {"mode", "Manual"}}, json{{"type", "Pause"}, {"extra", 1}}})
    {
        CAPTURE(frame.dump());
        CHECK(error_kind([&] { session.ingest_frame(sub->client_id(), frame); }) == SessionErrorKind::MalformedCommand);
    }
    CHECK_FALSE(session.step());
    CHECK(session.ingest_frame(sub->client_id(), json{{"type", "Resume"}}) == 1);
}

TEST_CASE("a human classification is acked and shows in the next snapshot")
{
    Session session("s", watch_scenario());
    const auto sub = session.join("op");
    // The actor named in the frame is ignored; the session stamps the sender.
    session.ingest_frame("op", json{{"type", "Classify"},
                                    {"actor", {{"kind", "Autonomous"}, {"id", "eye"}}},
                                    {"target", "near"},
                                    {"label", "NoCasualty"}});
    REQUIRE(session.step());
    const auto frames = drain(*sub);
    CHECK(frames[1]->kind == EnvelopeKind::CommandAck);
    bool saw_event = false;
    for (const auto &f : frames)
        if (f->kind == EnvelopeKind::Event && f->payload.at("type") == "Classified")
        {
            saw_event = true;
            CHECK_FALSE(f->payload.contains("correct"));
        }
    CHECK(saw_event);
    const json *near = find_target(frames.back()->payload, "near");
    REQUIRE(near);
    CHECK(near->at("state") == "Classified");
    CHECK(near->at("label") == "NoCasualty");
    CHECK(near->at("classified_by") == json{{"kind", "Human"}, {"id", "op"}});
}

TEST_CASE("no envelope reveals ground truth of unknown targets")
{
    Session session("s", watch_scenario());
    const auto sub = session.join();
    session.ingest(sub->client_id(), ResumeCommand{});
    for (int i = 0; i < 40; ++i)
    {
        session.step();
        for (const auto &f : drain(*sub))
        {
            CHECK(f->text.find("ground_truth") == std::string::npos);
            const json &snap = f->kind == EnvelopeKind::Hello ? f->payload.at("snapshot") : f->payload;
            if (f->kind != EnvelopeKind::Snapshot && f->kind != EnvelopeKind::Hello)
                continue;
            for (const auto &t : snap.at("targets"))
                if (t.at("state") == "Unknown")
                    CHECK_FALSE(t.contains("label"));
        }
    }
}

TEST_CASE("subscribers joined together see identical streams")
{
    Session session("s", default_scenario());
    const auto a = session.join();
    const auto b = session.join();
    CHECK(a->client_id() != b->client_id());
    session.ingest(a->client_id(), ResumeCommand{});
    session.ingest(b->client_id(), SetModeCommand{Mode::HumanTeaming});
    std::vector<std::string> sa;
    std::vector<std::string> sb;
    for (int i = 0; i < 200; ++i)
    {
        session.step();
        for (const auto &e : drain(*a))
            if (e->kind != EnvelopeKind::Hello)
                sa.push_back(e->text);
        for (const auto &e : drain(*b))
            if (e->kind != EnvelopeKind::Hello)
                sb.push_back(e->text);
    }
    CHECK(sa.size() > 200);
    CHECK(sa == sb);
}

TEST_CASE("a stalled subscriber is dropped without holding up the rest")
{
    Session session("s", default_scenario());
    const auto slow = session.join("slow");
    const auto fast = session.join("fast");
    session.ingest("fast", ResumeCommand{});
    std::uint64_t last_fast = 0;
    for (int i = 0; i < 100; ++i)
    {
        REQUIRE(session.step());
        for (const auto &e : drain(*fast))
        {
            CHECK(e->seq > last_fast);
            last_fast = e->seq;
        }
    }
    CHECK(slow->closed());
    CHECK(slow->buffered() == 0);
    CHECK(session.dropped_clients() == std::vector<std::string>{"slow"});
    CHECK_FALSE(fast->closed());
    CHECK(last_fast == session.head_seq());
    CHECK_FALSE(slow->wait_pop(10ms));
}

TEST_CASE("subscriber buffer")
{
    Subscriber sub("x", 4);
    CHECK_FALSE(sub.wait_pop(5ms));
    CHECK_FALSE(sub.peek());
    std::thread closer(
        [&]
        {
            std::this_thread::sleep_for(20ms);
            sub.close();
        });
    CHECK_FALSE(sub.wait_pop(2s));
    closer.join();
    CHECK(sub.closed());
}

TEST_CASE("envelope JSON round-trip")
{
    Session session("s", default_scenario());
    const auto env = session.latest_snapshot();
    const Envelope back = Envelope::from_json(json::parse(env->text));
    CHECK(back.seq == env->seq);
    CHECK(back.kind == EnvelopeKind::Snapshot);
    CHECK(back.payload == env->payload);
    CHECK(back.sim_time == env->sim_time);
    for (auto k : {EnvelopeKind::Snapshot, EnvelopeKind::Event, EnvelopeKind::CommandAck, EnvelopeKind::CommandReject,
                   EnvelopeKind::Hello})
        CHECK(envelope_kind_from_string(to_string(k)) == k);
    CHECK_THROWS(envelope_kind_from_string("Bogus"));
}

TEST_CASE("paced sessions advance on their own")
{
    Scenario s = default_scenario();
    s.mode_config.tick_hz = 100.0;
    Session session("s", s);
    const auto sub = session.join();
    session.start();
    session.ingest(sub->client_id(), ResumeCommand{});
    std::uint64_t tick = 0;
    const auto deadline = std::chrono::steady_clock::now() + 5s;
    while (tick < 10 && std::chrono::steady_clock::now() < deadline)
        if (auto e = sub->wait_pop(100ms); e && e->kind == EnvelopeKind::Snapshot)
            tick = e->payload.at("tick").get<std::uint64_t>();
    session.stop();
    CHECK(tick >= 10);
}

TEST_CASE("session manager")
{
    SessionManager manager(false);
    const auto a = manager.create(default_scenario());
    const auto b = manager.create(watch_scenario());
    CHECK(a->id() != b->id());
    CHECK(manager.find(a->id()) == a);
    CHECK(manager.ids().size() == 2);
    const auto sub = b->join();
    CHECK(manager.close(b->id()));
    CHECK(sub->closed());
    CHECK_FALSE(manager.close(b->id()));
    CHECK_FALSE(manager.find(b->id()));

    Scenario bad = default_scenario();
    bad.agents[0].speed = -1.0;
    CHECK_THROWS_AS(manager.create(bad), ScenarioError);
    CHECK(manager.ids() == std::vector<std::string>{a->id()});
}
