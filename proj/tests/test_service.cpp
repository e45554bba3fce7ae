#include <atomic>
#include <chrono>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "doctest.h"
#include "earshot/assets.hpp"
#include "earshot/error.hpp"
#include "earshot/service/server.hpp"
#include "earshot/service/session_manager.hpp"
#include "httplib.h"
#include "test_util.hpp"

using namespace earshot;
using namespace earshot::service;
using nlohmann::json;

namespace {

OracleScript asteroid_script() {
  OracleScript s;
  s.fire_at = {0};
  s.responses[0] = "Asteroid belt";
  return s;
}

ServiceOptions oracle_options(std::size_t capacity = 1024) {
  ServiceOptions o;
  o.backends.trigger = BackendKind::Oracle;
  o.backends.responder = BackendKind::Oracle;
  o.backends.script = asteroid_script();
  o.queue_capacity = capacity;
  return o;
}

std::string utterance(const std::string& speaker, const std::string& text) {
  return json{{"type", "utterance"}, {"speaker", speaker}, {"text", text}}.dump();
}

std::string silence(long ms) { return json{{"type", "silence"}, {"duration_ms", ms}}.dump(); }

std::vector<json> of_type(const std::vector<json>& frames, const std::string& type) {
  std::vector<json> out;
  for (const auto& f : frames) {
    if (f["type"] == type) out.push_back(f);
  }
  return out;
}

Memory xiao_ming() {
  return parse_memory_text(testutil::read_file(testutil::fixture("xiao_ming_memory.txt")), "xm");
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("question followed by a second of silence yields the scripted whisper") {
    SessionManager mgr(oracle_options());
    auto id = mgr.create({});
    CHECK(mgr.submit(id, utterance("Speaker 2", "what is between mars and jupiter")));
    CHECK(mgr.submit(id, silence(1000)));
    mgr.flush(id);
    auto frames = mgr.frames(id);
    auto whispers = of_type(frames, "whisper");
    REQUIRE(whispers.size() == 1);
    CHECK(whispers[0]["text"] == "Asteroid belt");
    CHECK(whispers[0]["at_turn"] == 0);
    CHECK(whispers[0]["latency_ms"].get<long>() >= 0);
    auto sil = of_type(frames, "silence");
    REQUIRE(sil.size() == 1);
    CHECK(sil[0]["tokens"] == 2);

    auto t = mgr.transcript(id);
    REQUIRE(t.turns.size() == 2);
    CHECK(t.turns[0].speaker == SpeakerId::other(2));
    CHECK(t.turns[1].speaker.is_assistant());
    CHECK(t.turns[1].text() == "Asteroid belt");
    CHECK(t.turns[1].start == t.turns[0].end + Millis(500));
  }

  TEST_CASE("every outbound frame carries the envelope with increasing seq") {
    SessionManager mgr(oracle_options());
    auto id = mgr.create({});
    mgr.submit(id, utterance("User", "hello there"));
    mgr.submit(id, silence(250));
    mgr.submit(id, R"({"type":"manual_trigger"})");
    mgr.flush(id);
    const auto schema = json::parse(assets::wire_frame_schema);
    const auto required = schema["$defs"]["envelope"]["required"];
    std::uint64_t prev = 0;
    for (const auto& f : mgr.frames(id)) {
      for (const auto& key : required) CHECK(f.contains(key.get<std::string>()));
      CHECK(f["v"] == kWireVersion);
      CHECK(f["session_id"] == id);
      CHECK(f["seq"].get<std::uint64_t>() == prev + 1);
      prev = f["seq"].get<std::uint64_t>();
    }
    CHECK(prev >= 4);
    CHECK(mgr.frames(id, prev - 1).size() == 1);
    CHECK(mgr.frames(id).front()["type"] == "session_state");
  }

  TEST_CASE("malformed frames produce error frames and the session keeps going") {
    SessionManager mgr(oracle_options());
    auto id = mgr.create({});
    mgr.submit(id, "not json");
    mgr.submit(id, R"({"type":"dance"})");
    mgr.submit(id, R"({"type":"silence","duration_ms":-5})");
    mgr.submit(id, utterance("Agent", "sneaky"));
    mgr.submit(id, utterance("User", "  "));
    mgr.submit(id, R"({"type":"config","config":{"silence_unit":1.0}})");
    mgr.submit(id, utterance("Speaker 2", "what is between mars and jupiter"));
    mgr.submit(id, silence(1000));
    mgr.flush(id);
    auto frames = mgr.frames(id);
    auto errors = of_type(frames, "error");
    REQUIRE(errors.size() == 6);
    for (std::size_t i = 0; i < 5; ++i) CHECK(errors[i]["code"] == "BadFrame");
    CHECK(errors[5]["code"] == "BadConfig");
    CHECK(of_type(frames, "whisper").size() == 1);
    CHECK(mgr.state(id)["state"] == "open");
  }

  TEST_CASE("config frames update the live session") {
    SessionManager mgr(oracle_options());
    auto id = mgr.create({});
    mgr.submit(id, R"({"type":"config","config":{"manual_mode":true}})");
    mgr.submit(id, utterance("Speaker 2", "what is between mars and jupiter"));
    mgr.submit(id, silence(1000));
    mgr.flush(id);
    CHECK(of_type(mgr.frames(id), "whisper").empty());
    CHECK(mgr.state(id)["config"]["manual_mode"] == true);
    mgr.submit(id, R"({"type":"manual_trigger"})");
    mgr.flush(id);
    auto w = of_type(mgr.frames(id), "whisper");
    REQUIRE(w.size() == 1);
    CHECK(w[0]["manual"] == true);
    CHECK(w[0]["text"] == "Asteroid belt");
  }

  TEST_CASE("sessions are isolated") {
    SessionManager mgr(oracle_options());
    auto a = mgr.create({});
    auto b = mgr.create({});
    CHECK(a != b);
    CHECK(mgr.size() == 2);
    mgr.submit(a, utterance("Speaker 2", "what is between mars and jupiter"));
    mgr.submit(a, silence(1000));
    mgr.submit(b, utterance("User", "nothing to see"));
    mgr.flush(a);
    mgr.flush(b);
    CHECK(of_type(mgr.frames(a), "whisper").size() == 1);
    CHECK(of_type(mgr.frames(b), "whisper").empty());
    CHECK(mgr.transcript(b).turns.size() == 1);
    for (const auto& f : mgr.frames(b)) CHECK(f["session_id"] == b);
  }

  TEST_CASE("a full queue rejects frames with a Backpressure error") {
    SessionManager mgr(oracle_options(2));
    auto id = mgr.create({});
    // Park the worker inside a sink so the inbox can fill up.
    std::atomic<bool> parked{false}, release{false};
    mgr.subscribe(id, [&](std::uint64_t, const std::string& frame) {
      if (json::parse(frame)["type"] != "utterance" || parked.exchange(true)) return;
      while (!release) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    });
    CHECK(mgr.submit(id, utterance("User", "first")));
    while (!parked) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    CHECK(mgr.submit(id, utterance("User", "second")));
    CHECK(mgr.submit(id, utterance("User", "third")));
    // The rejection is published while the worker still holds the outbound lock.
    std::thread releaser([&] {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      release = true;
    });
    CHECK_FALSE(mgr.submit(id, utterance("User", "fourth")));
    releaser.join();
    mgr.flush(id);
    auto errors = of_type(mgr.frames(id), "error");
    REQUIRE(errors.size() == 1);
    CHECK(errors[0]["code"] == "Backpressure");
    CHECK(of_type(mgr.frames(id), "utterance").size() == 3);
    CHECK(mgr.transcript(id).turns.size() == 3);
  }

  TEST_CASE("unknown memory, unknown session, closed session") {
    SessionManager mgr(oracle_options());
    CreateRequest r;
    r.memory_id = "nope";
    try {
      mgr.create(r);
      FAIL("expected UnknownMemory");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnknownMemory);
    }
    try {
      mgr.submit("missing", silence(1));
      FAIL("expected UnknownSession");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnknownSession);
    }
    auto id = mgr.create({});
    mgr.close(id);
    CHECK(mgr.state(id)["state"] == "closed");
    CHECK_FALSE(mgr.submit(id, silence(1)));
    CHECK(of_type(mgr.frames(id), "error").back()["code"] == "SessionClosed");
    mgr.close(id);  // idempotent
  }

  TEST_CASE("subscribers get replay then live frames in order") {
    SessionManager mgr(oracle_options());
    auto id = mgr.create({});
    mgr.submit(id, utterance("User", "one"));
    mgr.flush(id);
    std::mutex mu;
    std::vector<std::uint64_t> seen;
    auto token = mgr.subscribe(id, [&](std::uint64_t seq, const std::string& frame) {
      std::lock_guard lk(mu);
      CHECK(json::parse(frame)["seq"] == seq);
      seen.push_back(seq);
    });
    mgr.submit(id, utterance("User", "two"));
    mgr.flush(id);
    mgr.unsubscribe(id, token);
    mgr.submit(id, utterance("User", "three"));
    mgr.flush(id);
    std::lock_guard lk(mu);
    CHECK(seen == std::vector<std::uint64_t>{1, 2, 3});

    std::vector<std::uint64_t> late;
    mgr.subscribe(id, [&](std::uint64_t seq, const std::string&) { late.push_back(seq); }, 2);
    CHECK(late == std::vector<std::uint64_t>{3, 4});
  }

  TEST_CASE("idle silence injection fires without client silence frames") {
    SessionManager mgr(oracle_options());
    CreateRequest r;
    r.idle_silence = true;
    r.config.silence_unit = Millis(50);
    auto id = mgr.create(r);
    mgr.submit(id, utterance("Speaker 2", "what is between mars and jupiter"));
    bool got = false;
    for (int i = 0; i < 100 && !got; ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      got = !of_type(mgr.frames(id), "whisper").empty();
    }
    CHECK(got);
    auto sil = of_type(mgr.frames(id), "silence");
    REQUIRE_FALSE(sil.empty());
    CHECK(sil[0]["injected"] == true);
  }

  TEST_CASE("create request parsing") {
    auto r = parse_create_request(json::parse(
        R"({"memory_id":"xm","idle_silence":true,"config":{"suppression_turns":2},
            "oracle_script":{"fire_at":[1],"responses":{"1":"x"}}})"));
    CHECK(*r.memory_id == "xm");
    CHECK(r.idle_silence);
    CHECK(r.config.suppression_turns == 2);
    CHECK(r.script->fire_at == std::set<long>{1});
    CHECK_FALSE(parse_create_request(nullptr).memory_id.has_value());
    CHECK_THROWS_AS(parse_create_request(json::array()), Error);
    CHECK_THROWS_AS(parse_create_request(json{{"config", {{"trigger_threshold", 3}}}}), Error);
    CHECK_THROWS_AS(parse_create_request(json{{"oracle_script", {{"responses", 1}}}}), Error);
  }

  TEST_CASE("split_target decodes queries") {
    auto [path, q] = split_target("/v1/session/a/frames?after_seq=3&x=a%20b&flag");
    CHECK(path == "/v1/session/a/frames");
    CHECK(q.at("after_seq") == "3");
    CHECK(q.at("x") == "a b");
    CHECK(q.count("flag") == 1);
  }

  TEST_CASE("REST routing without sockets") {
    auto o = oracle_options(4);
    o.memories = std::make_shared<MemoryStore>();
    SessionManager mgr(o);
    auto call = [&](std::string method, std::string target, std::string body = "", std::string ct = "application/json") {
      return route_rest(mgr, {std::move(method), std::move(target), std::move(body), std::move(ct)});
    };

    auto h = call("GET", "/healthz");
    CHECK(h.status == 200);
    CHECK(json::parse(h.body)["status"] == "ok");
    CHECK(json::parse(h.body)["wire_version"] == 1);

    CHECK(call("GET", "/v1/memory/xm").status == 404);
    CHECK(call("POST", "/v1/session", R"({"memory_id":"xm"})").status == 404);
    auto put = call("PUT", "/v1/memory/xm", testutil::read_file(testutil::fixture("xiao_ming_memory.txt")), "text/plain");
    CHECK(put.status == 200);
    auto got = json::parse(call("GET", "/v1/memory/xm").body).get<Memory>();
    CHECK(got == xiao_ming());
    CHECK(call("PUT", "/v1/memory/other", json(xiao_ming()).dump()).status == 400);
    CHECK(call("PUT", "/v1/memory/xm", "[1]").status == 400);
    CHECK(json::parse(call("GET", "/v1/memory").body)["memories"] == json::array({"xm"}));

    auto created = call("POST", "/v1/session", R"({"memory_id":"xm"})");
    REQUIRE(created.status == 201);
    auto id = json::parse(created.body)["session_id"].get<std::string>();
    CHECK(json::parse(created.body)["stream"] == "/v1/session/" + id + "/stream");
    CHECK(call("POST", "/v1/session", "{bad").status == 400);
    CHECK(call("POST", "/v1/session", R"({"config":{"silence_unit":0}})").status == 400);

    auto msg = call("POST", "/v1/session/" + id + "/messages?wait=1",
                    json::array({json::parse(utterance("Speaker 2", "what is between mars and jupiter")),
                                 json::parse(silence(1000))})
                        .dump());
    CHECK(msg.status == 202);
    CHECK(json::parse(msg.body)["accepted"] == 2);

    auto tr = call("GET", "/v1/session/" + id + "/transcript?wait=1");
    REQUIRE(tr.status == 200);
    auto d = json::parse(tr.body).get<Dialogue>();
    CHECK(d.whisper_count() == 1);
    CHECK(d.memory_id == "xm");

    auto fr = json::parse(call("GET", "/v1/session/" + id + "/frames?after_seq=1").body)["frames"];
    CHECK(fr.front()["seq"] == 2);
    CHECK(call("GET", "/v1/session/" + id + "/frames?after_seq=-1").status == 400);

    CHECK(call("GET", "/v1/session/missing/transcript").status == 404);
    CHECK(call("GET", "/v1/nothing").status == 404);
    CHECK(call("PATCH", "/v1/session").status == 400);
    CHECK(call("GET", "/v1/schema/wire_frame").body == assets::wire_frame_schema);

    CHECK(json::parse(call("DELETE", "/v1/session/" + id).body)["state"] == "closed");
    auto late = call("POST", "/v1/session/" + id + "/messages", silence(500));
    CHECK(late.status == 429);
    CHECK(json::parse(late.body)["rejected"] == 1);
    CHECK(json::parse(call("GET", "/v1/session").body)["sessions"].size() == 1);
  }

  TEST_CASE("live server: REST, WebSocket and SSE") {
    auto o = oracle_options();
    SessionManager mgr(o);
    mgr.memories().replace(xiao_ming());
    Server server(mgr, ServerOptions{"127.0.0.1", 0, 2});
    const auto port = server.start();
    REQUIRE(port != 0);

    httplib::Client http("127.0.0.1", port);
    http.set_read_timeout(5, 0);
    auto health = http.Get("/healthz");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(http.Get("/v1/memory/xm")->status == 200);
    CHECK(http.Get("/v1/session/ghost/transcript")->status == 404);
    auto created = http.Post("/v1/session", R"({"memory_id":"xm"})", "application/json");
    REQUIRE(created);
    REQUIRE(created->status == 201);
    const auto id = json::parse(created->body)["session_id"].get<std::string>();

    namespace beast = boost::beast;
    namespace net = boost::asio;
    net::io_context ioc;
    net::ip::tcp::resolver resolver(ioc);
    beast::websocket::stream<net::ip::tcp::socket> ws(ioc);
    net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/v1/session/" + id + "/stream");
    ws.text(true);
    ws.write(net::buffer(utterance("Speaker 2", "what is between mars and jupiter")));
    ws.write(net::buffer(silence(1000)));

    std::vector<json> received;
    for (int i = 0; i < 20; ++i) {
      beast::flat_buffer buf;
      ws.read(buf);
      received.push_back(json::parse(beast::buffers_to_string(buf.data())));
      if (received.back()["type"] == "whisper") break;
    }
    REQUIRE(!received.empty());
    CHECK(received.front()["seq"] == 1);
    CHECK(received.back()["type"] == "whisper");
    CHECK(received.back()["text"] == "Asteroid belt");
    for (std::size_t i = 1; i < received.size(); ++i) CHECK(received[i]["seq"] == received[i - 1]["seq"].get<int>() + 1);
    ws.close(beast::websocket::close_code::normal);

    // SSE replays from Last-Event-ID and formats "id:" / "data:" records.
    std::string sse;
    httplib::Headers headers{{"Last-Event-ID", "2"}};
    http.Get("/v1/session/" + id + "/events", headers, [&](const char* data, std::size_t len) {
      sse.append(data, len);
      return sse.find("\"whisper\"") == std::string::npos;
    });
    CHECK(sse.find("id: 3\n") != std::string::npos);
    CHECK(sse.find("id: 2\n") == std::string::npos);
    CHECK(sse.find("data: {") != std::string::npos);

    auto tr = http.Get("/v1/session/" + id + "/transcript");
    REQUIRE(tr);
    CHECK(json::parse(tr->body).get<Dialogue>().whisper_count() == 1);
    CHECK(http.Get("/v1/session/ghost/events")->status == 404);
    server.stop();
  }
}
