#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "earshot/dialogue.hpp"

namespace earshot {

inline constexpr std::string_view kSilenceMarker = "|SILENCE >";

struct StreamToken {
  enum class Kind { SpeakerChange, Word, Silence, WhisperWord };

  Kind kind = Kind::Silence;
  SpeakerId speaker = SpeakerId::user();  // meaningful for SpeakerChange only
  std::string text;                       // Word and WhisperWord
  Millis wall_offset{0};                  // time the token becomes available

  static StreamToken speaker_change(SpeakerId who, Millis at);
  static StreamToken word(std::string w, Millis at);
  static StreamToken silence(Millis at);
  static StreamToken whisper_word(std::string w, Millis at);

  bool is_silence() const noexcept { return kind == Kind::Silence; }

  bool operator==(const StreamToken&) const = default;
};

struct StreamConfig {
  Millis silence_unit{500};
  double words_per_second = 2.9;  // only used when a stream carries no timing

  // Throws InvalidArgument for a non-positive silence unit or speech rate.
  void validate() const;
};

// ceil(max(gap, 0) / unit)
std::size_t silence_tokens_for(Millis gap, Millis unit);

std::vector<StreamToken> to_stream(const Dialogue& d, const StreamConfig& cfg = {});

// Throws OrphanWord when a Word precedes every SpeakerChange.
Dialogue from_stream(std::span<const StreamToken> tokens, const StreamConfig& cfg = {});

// Text rendering used for prompts, judge input and training contexts:
//   User: hello there |SILENCE > (Agent: Cocos Islands) |SILENCE >
//   Speaker 1: ...
std::string render_stream(std::span<const StreamToken> tokens);
// Same text plus, per token, the length of the rendering through that token.
std::string render_stream(std::span<const StreamToken> tokens, std::vector<std::size_t>& prefix_end);

// Turn index (over non-assistant turns) that each token belongs to; -1 before
// the first turn starts.
std::vector<long> token_turns(std::span<const StreamToken> tokens);

}  // namespace earshot
