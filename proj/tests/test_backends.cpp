#include <cmath>

#include "doctest.h"
#include "earshot/backends.hpp"
#include "earshot/error.hpp"
#include "test_util.hpp"

using namespace earshot;
using testutil::utt;

namespace {

void feed_turn(TriggerBackend& t, SpeakerId who, std::string_view text, std::size_t silences) {
  t.observe(StreamToken::speaker_change(who, Millis(0)));
  for (auto& w : text::split_words(text)) t.observe(StreamToken::word(w, Millis(0)));
  for (std::size_t i = 0; i < silences; ++i) t.observe(StreamToken::silence(Millis(0)));
}

void feed_turn(ResponderBackend& r, SpeakerId who, std::string_view text, std::size_t silences) {
  r.observe(StreamToken::speaker_change(who, Millis(0)));
  for (auto& w : text::split_words(text)) r.observe(StreamToken::word(w, Millis(0)));
  for (std::size_t i = 0; i < silences; ++i) r.observe(StreamToken::silence(Millis(0)));
}

ChatResponse with_logprobs(double p_yes, double p_no) {
  ChatResponse r;
  r.content = "yes";
  r.logprobs = {{"content",
                 {{{"token", "Yes"},
                   {"logprob", std::log(p_yes)},
                   {"top_logprobs",
                    {{{"token", "Yes"}, {"logprob", std::log(p_yes)}},
                     {{"token", " no"}, {"logprob", std::log(p_no)}},
                     {{"token", "maybe"}, {"logprob", std::log(0.05)}}}}}}}};
  return r;
}

}  // namespace

TEST_SUITE("backends") {
  TEST_CASE("normalize_whisper") {
    CHECK(normalize_whisper("Cocos Islands").text() == "Cocos Islands");
    CHECK(normalize_whisper("  \"(Agent: Liu Lin)\" ").text() == "Liu Lin");
    CHECK(normalize_whisper("Whisper: May 12<|eot_id|>").text() == "May 12");
    CHECK(normalize_whisper("<|eot_id|>").is_veto());
    CHECK(normalize_whisper("<no response>").is_veto());
    CHECK(normalize_whisper("   ").is_veto());
    auto long_one = normalize_whisper("one two three four five");
    CHECK(long_one.words.size() == 3);
    CHECK(long_one.warnings.size() == 1);
  }

  TEST_CASE("decide only at silences") {
    QuestionTrigger t;
    CHECK_THROWS_AS(t.decide(), Error);
    t.observe(StreamToken::speaker_change(SpeakerId::user(), Millis(0)));
    t.observe(StreamToken::word("hi", Millis(0)));
    try {
      t.decide();
      FAIL("expected NotAtSilence");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NotAtSilence);
    }
    t.observe(StreamToken::silence(Millis(0)));
    auto d = t.decide();
    CHECK(d.at_token == 2);
    CHECK_FALSE(d.fire);
    CHECK(t.state().last_decision.has_value());
    CHECK_THROWS_AS(t.set_threshold(1.5), Error);
  }

  TEST_CASE("question trigger arms on another speaker's question and disarms on a whisper") {
    QuestionTrigger t(0.5, 3);
    feed_turn(t, SpeakerId::other(1), "where did you go?", 2);
    CHECK(t.armed());
    CHECK_FALSE(t.decide().fire);
    t.observe(StreamToken::silence(Millis(0)));
    CHECK(t.decide().fire);
    // Still armed: keeps firing while no whisper arrives.
    t.observe(StreamToken::silence(Millis(0)));
    CHECK(t.decide().fire);
    t.observe(StreamToken::whisper_word("Cocos", Millis(0)));
    t.observe(StreamToken::silence(Millis(0)));
    CHECK_FALSE(t.armed());
    CHECK_FALSE(t.decide().fire);

    QuestionTrigger own;
    feed_turn(own, SpeakerId::user(), "where did I go?", 4);
    CHECK_FALSE(own.decide().fire);
    CHECK_THROWS_AS(QuestionTrigger(0.5, 0), Error);
  }

  TEST_CASE("oracle script from a dialogue") {
    Dialogue d;
    d.turns = {utt(SpeakerId::other(1), "where did you go?", 0, 1), utt(SpeakerId::assistant(), "Cocos", 1.2, 1.5),
               utt(SpeakerId::user(), "the Cocos Islands", 2, 3), utt(SpeakerId::other(2), "when?", 3.5, 4),
               utt(SpeakerId::assistant(), "May 12", 4.2, 4.6)};
    auto s = OracleScript::from_dialogue(d);
    CHECK(s.fire_at == std::set<long>{0, 2});
    CHECK(s.responses.at(2) == std::optional<std::string>("May 12"));
    CHECK(s.turn_words.at(1) == 3);
    nlohmann::json j = s;
    auto back = j.get<OracleScript>();
    CHECK(back.fire_at == s.fire_at);
    CHECK(back.responses == s.responses);
    CHECK(back.turn_words == s.turn_words);
  }

  TEST_CASE("oracle trigger waits for the turn's last word and fires once") {
    OracleScript s;
    s.fire_at = {0};
    s.turn_words = {{0, 3}};
    OracleTrigger t(s);
    t.observe(StreamToken::speaker_change(SpeakerId::other(1), Millis(0)));
    t.observe(StreamToken::word("so", Millis(0)));
    t.observe(StreamToken::silence(Millis(0)));  // hesitation inside the turn
    CHECK_FALSE(t.decide().fire);
    t.observe(StreamToken::word("where", Millis(0)));
    t.observe(StreamToken::word("to?", Millis(0)));
    t.observe(StreamToken::silence(Millis(0)));
    CHECK(t.decide().fire);
    t.observe(StreamToken::silence(Millis(0)));
    CHECK_FALSE(t.decide().fire);
  }

  TEST_CASE("oracle responder answers by turn") {
    auto s = nlohmann::json::parse(testutil::read_file(testutil::fixture("oracle_script.json"))).get<OracleScript>();
    OracleResponder r(s);
    feed_turn(r, SpeakerId::user(), "hello", 1);
    CHECK(r.respond("").is_veto());  // turn 0 not scripted
    feed_turn(r, SpeakerId::other(1), "what is between mars and jupiter", 2);
    CHECK(r.respond("").text() == "Asteroid belt");
    feed_turn(r, SpeakerId::user(), "no idea", 1);
    feed_turn(r, SpeakerId::other(1), "ok", 1);
    CHECK(r.respond("").is_veto());  // scripted veto
  }

  TEST_CASE("responder window is bounded and tracks turns") {
    OracleScript s;
    OracleResponder r(s, 4);
    feed_turn(r, SpeakerId::user(), "a b c d e", 1);
    feed_turn(r, SpeakerId::other(1), "f", 0);
    CHECK(r.window().size() == 4);
    CHECK(r.current_turn() == 1);
    CHECK(r.tokens_observed() == 9);
    CHECK(r.window().back().text == "f");
    CHECK_THROWS_AS(OracleResponder(s, 0), Error);
  }

  TEST_CASE("keyword responder whispers fresh memory words or vetoes") {
    const std::string memory =
        "Ana is a teacher. Ana went diving at the Cocos Islands marine reserve in May. Ana likes tea.";
    KeywordResponder r;
    feed_turn(r, SpeakerId::other(1), "Which reserve was it that you visited for the diving trip?", 3);
    auto w = r.respond(memory);
    REQUIRE_FALSE(w.is_veto());
    CHECK(w.text() == "Cocos Islands");

    KeywordResponder unrelated;
    feed_turn(unrelated, SpeakerId::other(1), "How was the weather yesterday?", 3);
    CHECK(unrelated.respond(memory).is_veto());
  }

  TEST_CASE("yes probability from logprobs and literal answers") {
    CHECK(yes_probability(with_logprobs(0.6, 0.2)) == doctest::Approx(0.75));
    ChatResponse lit;
    lit.content = "No.";
    CHECK(yes_probability(lit) == 0.0);
    lit.content = "yes, clearly";
    CHECK(yes_probability(lit) == 1.0);
    lit.content = "perhaps";
    CHECK_THROWS_AS(yes_probability(lit), Error);
  }

  TEST_CASE("remote trigger and responder through a scripted client") {
    auto client = ScriptedChatClient::sequence({"yes", "  Cocos Islands  ", "<no response>"});
    RemoteTrigger t(client, {}, 0.5);
    t.set_context("ctx");
    feed_turn(t, SpeakerId::other(1), "where?", 1);
    CHECK(t.decide().fire);
    auto reqs = client->requests();
    REQUIRE(reqs.size() == 1);
    CHECK(reqs[0].top_logprobs > 0);
    CHECK(reqs[0].messages[0].content == "ctx");
    CHECK(reqs[0].messages[1].content.find("Speaker 1: where? |SILENCE >") != std::string::npos);

    RemoteResponder r(client, {});
    feed_turn(r, SpeakerId::other(1), "where?", 1);
    CHECK(r.respond("memory").text() == "Cocos Islands");
    CHECK(r.respond("memory").is_veto());
    CHECK(client->requests()[1].messages[0].content == "memory");

    CHECK_THROWS_AS(RemoteTrigger(nullptr, {}), Error);
  }

  TEST_CASE("transport failures map to backend codes") {
    auto timeout = std::make_shared<ScriptedChatClient>(
        [](const ChatRequest&) -> std::string { throw Error(ErrorCode::Timeout, "slow"); });
    RemoteResponder r(timeout, {});
    feed_turn(r, SpeakerId::user(), "hi", 1);
    try {
      r.respond("m");
      FAIL("expected BackendTimeout");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BackendTimeout);
    }
  }
}
