#include <random>

#include "doctest.h"
#include "earshot/error.hpp"
#include "earshot/metrics.hpp"
#include "earshot/transcript.hpp"
#include "oracle_matching.hpp"
#include "test_util.hpp"

using namespace earshot;
using testutil::utt;

namespace {

std::set<long> random_subset(std::mt19937_64& rng, long n) {
  std::set<long> s;
  std::bernoulli_distribution coin(0.3);
  for (long i = 0; i < n; ++i) {
    if (coin(rng)) s.insert(i);
  }
  return s;
}

Dialogue scenario() {
  auto d = parse_transcript(testutil::read_file(testutil::fixture("cocos_scenario.txt"))).dialogue;
  d.id = "scenario";
  return d;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("hard counts on a worked example") {
    auto r = hard_pra({4, 7, 10}, {3, 7}, 20);
    CHECK(r.tp == 1);
    CHECK(r.fp == 2);
    CHECK(r.fn == 1);
    CHECK(r.tn == 16);
    CHECK(r.precision == doctest::Approx(1.0 / 3));
    CHECK(r.recall == doctest::Approx(0.5));
    CHECK(r.accuracy == doctest::Approx(17.0 / 20));
  }

  TEST_CASE("soft counts on the same example") {
    auto r = soft_pra({4, 7, 10}, {3, 7}, 20, 1);
    CHECK(r.tp == 2);
    CHECK(r.fp == 1);
    CHECK(r.fn == 0);
    CHECK(r.precision == doctest::Approx(2.0 / 3));
    CHECK(r.recall == 1.0);
    CHECK(r.accuracy == doctest::Approx(19.0 / 20));
  }

  TEST_CASE("one truth cannot absorb two predictions") {
    auto r = soft_pra({4, 6}, {5}, 10, 1);
    CHECK(r.tp == 1);
    CHECK(r.fp == 1);
    CHECK(r.fn == 0);
  }

  TEST_CASE("greedy order matters: nearest-first would lose a match") {
    // Truth 5 could take 5, leaving truth 4 with nothing; the optimum is 2.
    auto r = soft_pra({5, 6}, {4, 5}, 10, 1);
    CHECK(r.tp == 2);
  }

  TEST_CASE("empty sets use the P = R = 1 convention and are flagged") {
    auto r = hard_pra({}, {}, 5);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.accuracy == 1.0);
    CHECK(r.empty_precision);
    CHECK(r.empty_recall);
    auto only_truth = hard_pra({}, {2}, 5);
    CHECK(only_truth.empty_precision);
    CHECK_FALSE(only_truth.empty_recall);
    CHECK(only_truth.recall == 0.0);
  }

  TEST_CASE("range and window errors") {
    try {
      hard_pra({5}, {}, 5);
      FAIL("expected OutOfRange");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::OutOfRange);
    }
    CHECK_THROWS_AS(hard_pra({-1}, {}, 5), Error);
    CHECK_THROWS_AS(hard_pra({}, {}, 0), Error);
    CHECK_THROWS_AS(soft_pra({}, {}, 5, -1), Error);
  }

  TEST_CASE("random cases agree with exhaustive matching") {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 500; ++i) {
      long n = std::uniform_int_distribution<long>(1, 12)(rng);
      auto pred = random_subset(rng, n);
      auto truth = random_subset(rng, n);
      int w = std::uniform_int_distribution<int>(0, 2)(rng);
      auto s = soft_pra(pred, truth, n, w);
      auto tp = oracle::max_matching(pred, truth, w);
      REQUIRE(s.tp == tp);
      auto o = oracle::ratios(tp, pred.size(), truth.size(), n);
      CHECK(s.precision == o.precision);
      CHECK(s.recall == o.recall);
      CHECK(s.accuracy == o.accuracy);
      auto h = hard_pra(pred, truth, n);
      auto s0 = soft_pra(pred, truth, n, 0);
      CHECK(s0.tp == h.tp);
      CHECK(s0.precision == h.precision);
      CHECK(s0.accuracy == h.accuracy);
      CHECK(s.precision >= h.precision);
      CHECK(s.recall >= h.recall);
      CHECK(s.accuracy >= h.accuracy);
    }
  }

  TEST_CASE("corpus accumulation sums counts") {
    PraResult total;
    total.tp = total.fp = total.fn = total.tn = 0;
    total += hard_pra({1}, {1}, 4);
    total += hard_pra({0}, {2}, 4);
    CHECK(total.tp == 1);
    CHECK(total.fp == 1);
    CHECK(total.fn == 1);
    CHECK(total.tn == 5);
    CHECK(total.accuracy == doctest::Approx(6.0 / 8));
  }

  TEST_CASE("pearson") {
    std::vector<double> x{1, 2, 3, 4}, y{2, 1, 4, 3};
    CHECK(std::abs(pearson(x, y) - 0.6) < 1e-9);
    CHECK(pearson(x, x) == 1.0);
    std::vector<double> neg{4, 3, 2, 1};
    CHECK(pearson(x, neg) == -1.0);
    std::vector<double> flat{2, 2, 2, 2};
    try {
      pearson(x, flat);
      FAIL("expected DegenerateVariance");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateVariance);
    }
    CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{1}), Error);
    CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), Error);
  }

  TEST_CASE("response frequency and length") {
    // 23 speaker turns, 4 whispers of 2 words.
    Dialogue d;
    d.id = "f";
    double t = 0;
    for (int i = 0; i < 23; ++i) {
      d.turns.push_back(utt(i % 2 ? SpeakerId::other(1) : SpeakerId::user(), "some words", t, t + 1));
      t += 1.5;
      if (i % 5 == 1 && d.whisper_count() < 4) d.turns.push_back(utt(SpeakerId::assistant(), "two words", t - 0.3, t - 0.1));
    }
    REQUIRE(d.whisper_count() == 4);
    std::vector<Dialogue> corpus{d};
    auto s = response_stats(corpus);
    CHECK(s.turns == 23);
    CHECK(s.whispers == 4);
    CHECK(s.frequency == doctest::Approx(4.0 / 23));
    CHECK(std::round(s.frequency * 1000) / 10 == 17.4);
    REQUIRE(s.word_length.has_value());
    CHECK(s.word_length->mean == 2.0);
    CHECK(s.word_length->stddev == 0.0);
    CHECK_THROWS_AS(response_stats(std::span<const Dialogue>{}), Error);

    Dialogue silent = strip_whispers(d);
    std::vector<Dialogue> c2{silent};
    CHECK_FALSE(response_stats(c2).word_length.has_value());
  }

  TEST_CASE("evaluate traces against truth") {
    auto d = scenario();
    std::vector<Dialogue> truth{d};
    RunTrace perfect;
    perfect.dialogue_id = "scenario";
    for (long t : {2, 4, 6, 8}) {
      WhisperEvent e;
      e.at_turn = t;
      e.text = "x y";
      perfect.events.push_back(e);
      perfect.predicted_turns.insert(t);
    }
    RunTrace off = perfect;
    off.predicted_turns = {3, 4, 6, 9};
    RunTrace stray;
    stray.dialogue_id = "unknown";

    std::vector<RunTrace> a{perfect};
    auto ra = evaluate_traces(a, truth);
    CHECK(ra.hard.precision == 1.0);
    CHECK(ra.hard.recall == 1.0);
    CHECK(ra.hard.accuracy == 1.0);
    CHECK(ra.responses.frequency == doctest::Approx(4.0 / 11));

    std::vector<RunTrace> b{off, stray};
    auto rb = evaluate_traces(b, truth);
    CHECK(rb.dialogues == 1);
    CHECK(rb.warnings.size() == 1);
    CHECK(rb.hard.tp == 2);
    CHECK(rb.soft.tp == 4);
    auto j = to_json(rb);
    CHECK(j["Hard Precision"] == 0.5);
    CHECK(j["Soft Precision"] == 1.0);
    CHECK(j["Soft Accuracy"] == 1.0);
    CHECK(j["Hard Accuracy"] == doctest::Approx(7.0 / 11));
  }

  TEST_CASE("apply_trace places emitted whispers after their turn") {
    auto d = scenario();
    RunTrace t;
    t.dialogue_id = d.id;
    WhisperEvent e;
    e.at_turn = 2;
    e.text = "Cocos";
    auto toks = to_stream(strip_whispers(d));
    // Last silence token of turn 2.
    auto turns = token_turns(toks);
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (turns[i] == 2) e.at_token = i;
    }
    t.events = {e};
    WhisperEvent vetoed = e;
    vetoed.vetoed = true;
    vetoed.text.clear();
    vetoed.at_turn = 5;
    t.events.push_back(vetoed);
    auto out = apply_trace(d, t);
    CHECK(out.whisper_count() == 1);
    CHECK(out.speaker_turn_count() == 11);
    CHECK(assist_positions(out) == std::set<std::size_t>{2});
    CHECK(invariant_violations(out).empty());
    const auto& w = out.turns[3];
    CHECK(w.speaker.is_assistant());
    CHECK(w.start == toks[e.at_token].wall_offset);
    CHECK(w.duration() == Millis(0));
  }
}
