#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "earshot/dialogue.hpp"

namespace earshot {

// Line grammar:
//   <Speaker> [<start>]: <text with (hesitation <n> ms)> [<end>]
// Whisper lines use "##Whisper", "**Whispering Agent #N**" or "Agent".
// Optionally wrapped in "##### start dialogue" / "##### end dialogue".

struct ParseWarning {
  std::size_t line = 0;
  std::string message;
};

struct ParseOptions {
  // Accept "<Speaker>: <text>" lines without timestamps (used by reformat).
  bool allow_missing_times = false;
  // Parse but discard timestamps (every turn reported untimed).
  bool ignore_times = false;
};

struct ParsedTranscript {
  Dialogue dialogue;
  std::vector<ParseWarning> warnings;
  std::vector<bool> timed;  // per turn: did the line carry timestamps

  bool all_timed() const;
};

// Throws MalformedLine or NonMonotonicTime, both naming the 1-based line.
ParsedTranscript parse_transcript(std::string_view text, const ParseOptions& opts = {});

// Inverse of parse_transcript for canonical dialogues (times rendered at 100 ms).
std::string render_transcript(const Dialogue& d, bool with_delimiters = true);

inline constexpr std::string_view kDialogueStart = "##### start dialogue";
inline constexpr std::string_view kDialogueEnd = "##### end dialogue";

}  // namespace earshot
