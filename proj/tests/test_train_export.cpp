#include <cmath>
#include <set>

#include "doctest.h"
#include "earshot/error.hpp"
#include "earshot/standin.hpp"
#include "earshot/train_export.hpp"
#include "earshot/transcript.hpp"
#include "test_util.hpp"

using namespace earshot;
using testutil::utt;

namespace {

std::vector<Dialogue> standin_dialogues(std::size_t n, std::uint64_t seed) {
  std::vector<Dialogue> out;
  for (auto& s : standin_corpus(n, seed)) out.push_back(std::move(s.dialogue));
  return out;
}

// Distance rule written directly: every non-assistant turn at least 2 from every assist.
std::set<long> brute_candidates(const Dialogue& d) {
  std::vector<long> assists;
  long turn = -1;
  for (const auto& u : d.turns) {
    if (u.speaker.is_assistant()) assists.push_back(turn);
    else ++turn;
  }
  std::set<long> out;
  for (long p = 0; p <= turn; ++p) {
    bool ok = true;
    for (long a : assists) ok = ok && (p - a >= 2 || a - p >= 2);
    if (ok) out.insert(p);
  }
  return out;
}

const Dialogue* by_id(const std::vector<Dialogue>& c, const std::string& id) {
  for (const auto& d : c) {
    if (d.id == id) return &d;
  }
  return nullptr;
}

}  // namespace

TEST_SUITE("train_export") {
  TEST_CASE("negative candidates match the distance rule") {
    for (const auto& d : standin_dialogues(30, 7)) {
      auto c = negative_candidates(d);
      CHECK(std::set<long>(c.begin(), c.end()) == brute_candidates(d));
    }
  }

  TEST_CASE("positives: one per whisper turn with the right context and target") {
    auto d = parse_transcript(testutil::read_file(testutil::fixture("cocos_scenario.txt"))).dialogue;
    d.id = "scenario";
    std::vector<Dialogue> corpus{d};
    ResponderExportConfig cfg;
    cfg.negative_fraction = 0.0;
    auto r = build_responder_examples(corpus, cfg);
    CHECK(r.positives == 4);
    CHECK(r.negatives == 0);
    const auto full = render_stream(to_stream(d));
    std::set<std::string> targets;
    for (const auto& e : r.examples) {
      REQUIRE(e.positive);
      REQUIRE(e.target.has_value());
      targets.insert(*e.target);
      CHECK(e.context.ends_with(kSilenceMarker));
      CHECK(full.starts_with(e.context));
      // The context stops right before this whisper.
      CHECK(full.substr(e.context.size()).starts_with(" (Agent: " + *e.target + ")"));
    }
    CHECK(targets == std::set<std::string>{"Cocos Islands", "May 12, 2023", "Liu Lin", "Diving, snorkeling"});
  }

  TEST_CASE("negatives respect the fraction, the distance rule and the context shape") {
    auto corpus = standin_dialogues(80, 21);
    ResponderExportConfig cfg;
    cfg.seed = 3;
    auto r = build_responder_examples(corpus, cfg);
    std::size_t whisper_turns = 0;
    for (const auto& d : corpus) whisper_turns += assist_positions(d).size();
    CHECK(r.positives == whisper_turns);
    CHECK(r.negatives == static_cast<std::size_t>(std::llround(whisper_turns * 0.25 / 0.75)));
    CHECK(r.examples.size() == r.positives + r.negatives);
    for (const auto& e : r.examples) {
      if (e.positive) {
        auto words = text::split_words(*e.target);
        CHECK(words.size() >= 1);
        CHECK(words.size() <= 3);
        continue;
      }
      CHECK_FALSE(e.target.has_value());
      CHECK(e.context.ends_with(kSilenceMarker));
      const auto* d = by_id(corpus, e.dialogue_id);
      REQUIRE(d != nullptr);
      for (auto a : assist_positions(*d)) CHECK(std::labs(e.position - static_cast<long>(a)) >= 2);
    }
  }

  TEST_CASE("export is reproducible for a seed and shuffled") {
    auto corpus = standin_dialogues(10, 2);
    ResponderExportConfig cfg;
    cfg.seed = 9;
    auto a = build_responder_examples(corpus, cfg);
    auto b = build_responder_examples(corpus, cfg);
    CHECK(a.examples == b.examples);
    bool all_pos_first = true;
    for (std::size_t i = 0; i < a.positives; ++i) all_pos_first = all_pos_first && a.examples[i].positive;
    CHECK_FALSE(all_pos_first);
  }

  TEST_CASE("dialogues without room for negatives warn") {
    Dialogue tight;
    tight.id = "tight";
    tight.turns = {utt(SpeakerId::other(1), "where?", 0, 1), utt(SpeakerId::assistant(), "Oslo", 1.2, 1.5),
                   utt(SpeakerId::user(), "Oslo", 2, 3)};
    Dialogue none;
    none.id = "none";
    none.turns = {utt(SpeakerId::user(), "hi", 0, 1), utt(SpeakerId::other(1), "hello", 1, 2)};
    std::vector<Dialogue> corpus{tight, none};
    auto r = build_responder_examples(corpus, {});
    CHECK(r.positives == 1);
    CHECK(r.negatives == 0);
    // "none" has no assists, so it neither yields negatives nor warns.
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("InsufficientNegatives") != std::string::npos);
    auto t2 = tight, t3 = tight;
    t2.id = "t2";
    t3.id = "t3";
    std::vector<Dialogue> three{tight, t2, t3};
    auto short_run = build_responder_examples(three, {});
    CHECK(short_run.negatives == 0);
    CHECK(short_run.warnings.size() == 4);
    CHECK(short_run.warnings.back().find("wanted 1") != std::string::npos);
    ResponderExportConfig bad;
    bad.negative_fraction = 1.0;
    CHECK_THROWS_AS(build_responder_examples(corpus, bad), Error);
  }

  TEST_CASE("example files round trip") {
    auto corpus = standin_dialogues(3, 5);
    auto r = build_responder_examples(corpus, {});
    auto dir = testutil::scratch("export");
    write_examples(dir / "x.jsonl", r.examples);
    CHECK(read_examples(dir / "x.jsonl") == r.examples);
    auto first = nlohmann::json::parse(testutil::read_file(dir / "x.jsonl").substr(0, testutil::read_file(dir / "x.jsonl").find('\n')));
    CHECK((first["label"] == "positive" || first["label"] == "negative"));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("augment operations at the extremes") {
    std::vector<std::string> w{"a", "b", "c", "d"};
    AugmentConfig none{0, 0, 0, 1};
    CHECK(augment(w, none) == w);
    AugmentConfig drop_all{1, 0, 0, 1};
    CHECK(augment(w, drop_all).empty());

    // Every word swaps with its successor, so the first word travels to the end.
    AugmentConfig flip_all{0, 1, 0, 1};
    std::mt19937_64 rng(1);
    AugmentStats st;
    CHECK(augment(w, flip_all, rng, HomophoneLexicon::bundled(), &st) == std::vector<std::string>{"b", "c", "d", "a"});
    CHECK(st.flips == 3);
    CHECK(st.words == 4);

    auto lex = HomophoneLexicon::parse("# test\nthere\ttheir\nsee\tsea\n");
    CHECK(lex.size() == 2);
    AugmentConfig phon_all{0, 0, 1, 1};
    AugmentStats ps;
    auto out = augment({"There", "we", "see"}, phon_all, rng, lex, &ps);
    CHECK(out == std::vector<std::string>{"Their", "we", "sea"});
    CHECK(ps.phonetic == 2);
    CHECK_THROWS_AS(HomophoneLexicon::parse("nopair\n"), Error);
    AugmentConfig bad{1.5, 0, 0, 0};
    CHECK_THROWS_AS(augment(w, bad), Error);
  }

  TEST_CASE("augment_stream only touches word runs") {
    auto d = make_standin(1, "a").dialogue;
    auto toks = to_stream(d);
    AugmentConfig cfg{0.2, 0.2, 0.2, 4};
    std::mt19937_64 rng(4);
    AugmentStats st;
    auto noisy = augment_stream(toks, cfg, rng, &st);
    std::size_t words = 0, other_before = 0, other_after = 0;
    for (const auto& t : toks) {
      words += t.kind == StreamToken::Kind::Word;
      other_before += t.kind != StreamToken::Kind::Word;
    }
    for (const auto& t : noisy) other_after += t.kind != StreamToken::Kind::Word;
    CHECK(st.words == words);
    CHECK(other_before == other_after);
    CHECK(noisy.size() == toks.size() - st.drops);
    for (std::size_t i = 1; i < noisy.size(); ++i) CHECK(noisy[i].wall_offset >= noisy[i - 1].wall_offset);
  }

  TEST_CASE("trigger labels: one per silence, positive right before a whisper") {
    auto d = parse_transcript(testutil::read_file(testutil::fixture("cocos_scenario.txt"))).dialogue;
    d.id = "scenario";
    std::vector<Dialogue> corpus{d};
    auto labels = build_trigger_labels(corpus);
    auto toks = to_stream(d);
    std::size_t silences = 0;
    for (const auto& t : toks) silences += t.is_silence();
    CHECK(labels.size() == silences);

    std::size_t positives = 0;
    for (const auto& l : labels) {
      CHECK(l.rendered == labels.front().rendered);
      CHECK(toks[l.token_index].is_silence());
      CHECK(l.context().ends_with(kSilenceMarker));
      // Oracle: walk forward over silences and see whether a whisper follows.
      std::size_t k = l.token_index;
      while (k < toks.size() && toks[k].is_silence()) ++k;
      bool expect = k < toks.size() && toks[k].kind == StreamToken::Kind::WhisperWord;
      CHECK(l.label == (expect ? 1 : 0));
      positives += l.label;
    }
    // Each whisper sits after a gap of 0.6-0.7 s: two silence tokens each.
    CHECK(positives == 8);
  }
}
