#pragma once

#include <chrono>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace earshot {

using Millis = std::chrono::milliseconds;

inline double to_seconds(Millis ms) { return static_cast<double>(ms.count()) / 1000.0; }
Millis from_seconds(double seconds);

class SpeakerId {
 public:
  enum class Kind { User, Other, Assistant };

  static SpeakerId user() { return SpeakerId(Kind::User, 0); }
  static SpeakerId other(int index);
  static SpeakerId assistant() { return SpeakerId(Kind::Assistant, 0); }

  Kind kind() const noexcept { return kind_; }
  // 1-based index of a non-user human speaker; 0 for User and Assistant.
  int index() const noexcept { return index_; }
  bool is_user() const noexcept { return kind_ == Kind::User; }
  bool is_assistant() const noexcept { return kind_ == Kind::Assistant; }

  // "User", "Speaker 3", "Assistant".
  std::string name() const;
  // Inverse of name(); also accepts "Speaker3" and "Speaker #3".
  static std::optional<SpeakerId> from_name(std::string_view name);

  auto operator<=>(const SpeakerId&) const = default;

 private:
  SpeakerId(Kind kind, int index) : kind_(kind), index_(index) {}
  Kind kind_;
  int index_;
};

struct Hesitation {
  std::size_t word_index = 0;  // pause occurs before words[word_index]
  Millis duration{0};

  bool operator==(const Hesitation&) const = default;
};

struct Utterance {
  SpeakerId speaker = SpeakerId::user();
  std::vector<std::string> words;
  Millis start{0};
  Millis end{0};
  std::vector<Hesitation> hesitations;
  // Speaker label exactly as written when it was not a canonical name
  // (e.g. "Liu Lin"); empty otherwise.
  std::string label;

  std::string text() const;
  Millis duration() const { return end - start; }

  bool operator==(const Utterance&) const = default;
};

enum class DialogueSource { Synthetic, Soda, Perltqa, Mit, Live };

std::string_view to_string(DialogueSource s);
DialogueSource dialogue_source_from_string(std::string_view s);

struct Dialogue {
  std::string id;
  std::vector<Utterance> turns;
  std::optional<std::string> memory_id;
  DialogueSource source = DialogueSource::Synthetic;

  std::size_t speaker_turn_count() const;
  std::size_t whisper_count() const;

  bool operator==(const Dialogue&) const = default;
};

// Empty when the dialogue satisfies every structural invariant.
std::vector<std::string> invariant_violations(const Dialogue& d);

// Signed gaps between consecutive utterances, in list order. Negative values
// are overlaps; the token stream clamps them to zero silence.
std::vector<Millis> turn_gaps(const Dialogue& d);

// Indices over non-assistant turns that immediately precede a whisper. A whisper
// between non-assistant turns i and i+1 (or after the last turn i) maps to i.
std::set<std::size_t> assist_positions(const Dialogue& d);

// The dialogue as the live pipeline would hear it: no assistant turns.
Dialogue strip_whispers(const Dialogue& d);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  std::size_t n = 0;
};

MeanStd mean_std(std::span<const double> values);

// Per-corpus statistics mirroring the dataset summary table rows.
struct StatReport {
  std::size_t dialogues = 0;
  MeanStd assistant_seconds;
  MeanStd speaker_seconds;
  MeanStd turn_interval_seconds;
  MeanStd assistant_words;
  MeanStd speaker_words;
  MeanStd non_user_speakers;
  MeanStd assistant_turns;
  MeanStd speaker_turns;
};

StatReport dataset_stats(std::span<const Dialogue> corpus);

void to_json(nlohmann::json& j, const Utterance& u);
void from_json(const nlohmann::json& j, Utterance& u);
void to_json(nlohmann::json& j, const Dialogue& d);
void from_json(const nlohmann::json& j, Dialogue& d);
nlohmann::json to_json(const StatReport& r);

std::vector<Dialogue> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, std::span<const Dialogue> corpus);

}  // namespace earshot
