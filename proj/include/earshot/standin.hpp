#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "earshot/chat_client.hpp"
#include "earshot/dialogue.hpp"
#include "earshot/memory.hpp"

namespace earshot {

// Synthetic stand-ins for the generated corpora, built from fixed phrase banks.
// Each whisper follows a question from another speaker, sits inside a silence
// of 2.5-3.5 s, and is picked up by the user's next turn.
struct StandinOptions {
  std::size_t min_turns = 16;
  std::size_t max_turns = 28;
  std::size_t min_whispers = 2;
  std::size_t max_whispers = 4;
  std::size_t max_other_speakers = 3;
};

struct StandinSample {
  Memory memory;
  Dialogue dialogue;
};

StandinSample make_standin(std::uint64_t seed, std::string id, const StandinOptions& opts = {});
std::vector<StandinSample> standin_corpus(std::size_t n, std::uint64_t seed, const StandinOptions& opts = {});

// Answers memory-generation prompts with tagged blocks and dialogue prompts with
// a delimited transcript; lets the generate pipeline run offline.
ScriptedChatClient::Handler standin_generation_handler(std::uint64_t seed);

}  // namespace earshot
