#include <set>

#include "doctest.h"
#include "earshot/datagen.hpp"
#include "earshot/error.hpp"
#include "earshot/standin.hpp"
#include "earshot/text.hpp"

using namespace earshot;

TEST_SUITE("standin") {
  TEST_CASE("samples are deterministic per seed") {
    auto a = make_standin(5, "x");
    auto b = make_standin(5, "x");
    CHECK(a.dialogue == b.dialogue);
    CHECK(a.memory == b.memory);
    CHECK_FALSE(make_standin(6, "x").dialogue == a.dialogue);
  }

  TEST_CASE("structure of every sample in a corpus") {
    StandinOptions opts;
    auto corpus = standin_corpus(40, 100, opts);
    std::set<std::string> ids;
    for (const auto& s : corpus) {
      const auto& d = s.dialogue;
      ids.insert(d.id);
      CHECK(invariant_violations(d).empty());
      CHECK(validate_dialogue(d).pass);
      CHECK(d.memory_id == s.memory.memory_id);
      CHECK(d.speaker_turn_count() >= opts.min_turns);
      CHECK(d.speaker_turn_count() <= opts.max_turns);
      CHECK(d.whisper_count() >= opts.min_whispers);
      CHECK(d.whisper_count() <= opts.max_whispers);
      CHECK(s.memory.events.size() == 2);

      std::string memory_text = s.memory.profile_text;
      for (const auto& e : s.memory.events) memory_text += " " + e.text;
      for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const auto& u = d.turns[i];
        if (!u.speaker.is_assistant()) continue;
        REQUIRE(i > 0);
        REQUIRE(i + 1 < d.turns.size());
        const auto& asked = d.turns[i - 1];
        const auto& answer = d.turns[i + 1];
        // Another speaker asked, the user answers with the whispered fact.
        CHECK_FALSE(asked.speaker.is_user());
        CHECK(asked.words.back().back() == '?');
        CHECK(answer.speaker.is_user());
        CHECK(answer.text().find(u.text()) != std::string::npos);
        CHECK(memory_text.find(u.text()) != std::string::npos);
        auto silence = answer.start - asked.end;
        CHECK(silence >= Millis(2500));
        CHECK(silence <= Millis(3500));
      }
    }
    CHECK(ids.size() == 40);
  }

  TEST_CASE("whisper turns are spaced at least four turns apart") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      auto pos = assist_positions(make_standin(seed, "s").dialogue);
      std::optional<std::size_t> prev;
      for (auto p : pos) {
        if (prev) CHECK(p - *prev >= 4);
        prev = p;
      }
    }
  }

  TEST_CASE("bad options are rejected") {
    StandinOptions o;
    o.max_turns = 2;
    CHECK_THROWS_AS(make_standin(1, "x", o), Error);
  }

  TEST_CASE("generation handler answers both prompt kinds") {
    auto h = standin_generation_handler(1);
    ChatRequest mem;
    mem.messages = {{"user", "write a memory"}};
    auto m = h(mem);
    CHECK(m.find("<user_memory>") != std::string::npos);
    CHECK(m.find("<event_2>") != std::string::npos);
    ChatRequest dia;
    dia.messages = {{"user", "end with ##### start dialogue markers"}};
    auto out = h(dia);
    CHECK(out.find("##### start dialogue") != std::string::npos);
    CHECK(out.find("##### end dialogue") != std::string::npos);
  }
}
