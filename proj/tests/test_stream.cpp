#include <random>

#include "doctest.h"
#include "earshot/error.hpp"
#include "earshot/stream.hpp"
#include "test_util.hpp"

using namespace earshot;
using testutil::utt;

namespace {

using K = StreamToken::Kind;

// Silence counts between consecutive turns, read straight off the token list:
// a turn starts at a SpeakerChange or at the first word of a whisper group.
std::vector<std::size_t> silences_between_turns(const std::vector<StreamToken>& toks) {
  std::vector<std::size_t> out;
  std::size_t run = 0;
  bool started = false;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    bool turn_start = t.kind == K::SpeakerChange || (t.kind == K::WhisperWord && (i == 0 || toks[i - 1].kind != K::WhisperWord));
    if (turn_start) {
      if (started) out.push_back(run);
      started = true;
      run = 0;
    } else if (t.kind == K::Silence) {
      ++run;
    }
  }
  return out;
}

Dialogue two_turns(double gap_s) {
  Dialogue d;
  d.turns = {utt(SpeakerId::user(), "hello there", 0.0, 1.0), utt(SpeakerId::other(1), "hi", 1.0 + gap_s, 2.0 + gap_s)};
  return d;
}

}  // namespace

TEST_SUITE("stream") {
  TEST_CASE("silence token law at the edges") {
    const Millis unit{500};
    CHECK(silence_tokens_for(Millis(0), unit) == 0);
    CHECK(silence_tokens_for(Millis(-300), unit) == 0);
    CHECK(silence_tokens_for(Millis(1), unit) == 1);
    CHECK(silence_tokens_for(Millis(499), unit) == 1);
    CHECK(silence_tokens_for(Millis(500), unit) == 1);
    CHECK(silence_tokens_for(Millis(501), unit) == 2);
    CHECK(silence_tokens_for(Millis(2600), unit) == 6);
    CHECK(silence_tokens_for(Millis(2600), Millis(1000)) == 3);
  }

  TEST_CASE("gap of 499 ms yields one silence") {
    auto toks = to_stream(two_turns(0.499));
    CHECK(silences_between_turns(toks) == std::vector<std::size_t>{1});
    CHECK(silences_between_turns(to_stream(two_turns(-0.7))) == std::vector<std::size_t>{0});
  }

  TEST_CASE("token layout and rendering") {
    Dialogue d;
    d.turns = {utt(SpeakerId::user(), "where was it", 0.0, 1.0), utt(SpeakerId::assistant(), "Cocos Islands", 1.2, 1.6),
               utt(SpeakerId::other(2), "nice", 2.1, 2.5)};
    auto toks = to_stream(d);
    // SC w w w S WW WW S SC w
    REQUIRE(toks.size() == 10);
    CHECK(toks[0].kind == K::SpeakerChange);
    CHECK(toks[4].kind == K::Silence);
    CHECK(toks[5].kind == K::WhisperWord);
    CHECK(toks[7].kind == K::Silence);
    CHECK(render_stream(toks) == "User: where was it |SILENCE > (Agent: Cocos Islands) |SILENCE >\nSpeaker 2: nice");

    for (std::size_t i = 1; i < toks.size(); ++i) CHECK(toks[i].wall_offset >= toks[i - 1].wall_offset);

    std::vector<std::size_t> ends;
    auto text = render_stream(toks, ends);
    REQUIRE(ends.size() == toks.size());
    CHECK(ends.back() == text.size());
    CHECK(text.substr(0, ends[3]) == "User: where was it");
    // Both whisper words end at the closing parenthesis.
    CHECK(ends[5] == ends[6]);
    CHECK(text.substr(0, ends[6]).ends_with("(Agent: Cocos Islands)"));

    CHECK(token_turns(toks) == std::vector<long>{0, 0, 0, 0, 0, 0, 0, 0, 1, 1});
  }

  TEST_CASE("hesitations become silences inside the turn") {
    Dialogue d;
    auto u = utt(SpeakerId::user(), "I went with someone", 0.0, 3.0);
    u.hesitations = {{3, Millis(1200)}};
    d.turns = {u};
    auto toks = to_stream(d);
    std::size_t sil = 0;
    for (const auto& t : toks) sil += t.is_silence();
    CHECK(sil == 3);
    CHECK(toks[4].is_silence());
    auto back = from_stream(toks);
    REQUIRE(back.turns.size() == 1);
    REQUIRE(back.turns[0].hesitations.size() == 1);
    CHECK(back.turns[0].hesitations[0].word_index == 3);
    CHECK(back.turns[0].hesitations[0].duration == Millis(1500));
  }

  TEST_CASE("round trip keeps words and bounds gap error") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> gap(-1.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
      Dialogue d;
      double t = 0;
      for (int i = 0; i < 8; ++i) {
        auto who = i % 3 == 2 ? SpeakerId::assistant() : (i % 2 ? SpeakerId::other(1) : SpeakerId::user());
        double g = who.is_assistant() ? std::abs(gap(rng)) : gap(rng);
        double start = std::max(0.0, t + g);
        double dur = who.is_assistant() ? 0.4 : 1.5;
        d.turns.push_back(utt(who, who.is_assistant() ? "hint" : "some words here", start, start + dur));
        t = start + dur;
      }
      auto back = from_stream(to_stream(d));
      REQUIRE(back.turns.size() == d.turns.size());
      auto g0 = turn_gaps(d);
      auto g1 = turn_gaps(back);
      for (std::size_t i = 0; i < g0.size(); ++i) {
        CHECK(back.turns[i].words == d.turns[i].words);
        CHECK(back.turns[i].speaker == d.turns[i].speaker);
        auto expect = std::max(Millis(0), g0[i]);
        CHECK(std::abs((g1[i] - expect).count()) < 500);
      }
    }
  }

  TEST_CASE("untimed streams use the speech rate") {
    std::vector<StreamToken> toks{StreamToken::speaker_change(SpeakerId::user(), Millis(0)),
                                  StreamToken::word("a", Millis(0)), StreamToken::word("b", Millis(0)),
                                  StreamToken::silence(Millis(0)), StreamToken::silence(Millis(0)),
                                  StreamToken::speaker_change(SpeakerId::other(1), Millis(0)),
                                  StreamToken::word("c", Millis(0))};
    StreamConfig cfg;
    cfg.words_per_second = 2.0;
    auto d = from_stream(toks, cfg);
    REQUIRE(d.turns.size() == 2);
    CHECK(d.turns[0].end == Millis(1000));
    CHECK(d.turns[1].start == Millis(2000));
  }

  TEST_CASE("orphan words and bad config throw") {
    std::vector<StreamToken> toks{StreamToken::word("stray", Millis(0))};
    try {
      from_stream(toks);
      FAIL("expected OrphanWord");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::OrphanWord);
    }
    StreamConfig bad;
    bad.silence_unit = Millis(0);
    CHECK_THROWS_AS(to_stream(Dialogue{}, bad), Error);
  }
}
