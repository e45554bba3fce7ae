#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "earshot/chat_client.hpp"
#include "earshot/dialogue.hpp"
#include "earshot/memory.hpp"
#include "earshot/stream.hpp"

namespace earshot {

enum class Principle { Valuable, Pertinent, Competent, Unobtrusive, Transparent, Controllable, Deferent, Anticipatory, Safe };
inline constexpr std::array<Principle, 9> kAllPrinciples = {
    Principle::Valuable,     Principle::Pertinent, Principle::Competent,    Principle::Unobtrusive, Principle::Transparent,
    Principle::Controllable, Principle::Deferent,  Principle::Anticipatory, Principle::Safe};
std::string_view to_string(Principle p);

enum class ScenarioType { Presentation, Discussion, SharingExperiences, Disagreement, Interview };
inline constexpr std::array<ScenarioType, 5> kAllScenarios = {ScenarioType::Presentation, ScenarioType::Discussion,
                                                              ScenarioType::SharingExperiences, ScenarioType::Disagreement,
                                                              ScenarioType::Interview};
std::string_view to_string(ScenarioType s);

enum class UseCase { Reminding, SocialGuidance };
std::string_view to_string(UseCase u);

// The bundled 100-keyword list, in file order.
const std::vector<std::string>& keyword_list();

struct SodaRecord {
  std::string id;
  std::string context;              // narrative preceding the dialogue
  std::vector<std::string> dialogue;  // utterance lines
};

struct PerltqaProfile {
  std::string id;
  std::string profile;
  std::vector<std::string> events;
};

// JSONL loaders. SODA: {"id", "context", "dialogue": [..]};
// PerLTQA: {"id", "profile", "events": [..]}.
std::vector<SodaRecord> parse_soda_jsonl(std::string_view text);
std::vector<PerltqaProfile> parse_perltqa_jsonl(std::string_view text);
std::vector<SodaRecord> load_soda(const std::filesystem::path& path);
std::vector<PerltqaProfile> load_perltqa(const std::filesystem::path& path);
// Small synthetic stand-ins shipped with the build.
const std::vector<SodaRecord>& bundled_soda();
const std::vector<PerltqaProfile>& bundled_perltqa();

struct SourceCorpora {
  std::vector<SodaRecord> soda;
  std::vector<PerltqaProfile> perltqa;

  static SourceCorpora bundled();
};

struct GenerationSpec {
  MemorySource memory_source = MemorySource::Keywords;
  std::vector<std::string> keywords;       // keyword mode: 5 distinct
  ScenarioType scenario = ScenarioType::Discussion;
  UseCase use_case = UseCase::Reminding;
  std::array<Principle, 2> principles{Principle::Valuable, Principle::Pertinent};
  bool ignore_flag = false;
  std::string soda_context;                // SODA mode
  std::vector<std::string> seed_lines;     // SODA mode: first 3 dialogue lines
  std::size_t perltqa_index = 0;           // PerLTQA mode
  std::uint64_t rng_seed = 0;
};

struct SamplingWeights {
  double ignore_probability = 0.5;
  std::array<double, 5> scenario{1, 1, 1, 1, 1};
  std::array<double, 2> use_case{1, 1};
};

GenerationSpec sample_spec(MemorySource source, std::uint64_t seed, const SourceCorpora& corpora,
                           const SamplingWeights& w = {});

std::string render_memory_prompt(const GenerationSpec& spec);

// Extracts the last <user_memory>, <event_1>, <event_2> blocks; MissingTag otherwise.
Memory parse_memory_output(std::string_view output, std::string memory_id, MemorySource source);

struct GenerationModel {
  std::string model_name = "default";
  int max_tokens = 4096;
  double temperature = 1.0;
};

// PerLTQA mode samples a bundled profile and two events without calling the client.
Memory generate_memory(const GenerationSpec& spec, ChatClient& client, const SourceCorpora& corpora,
                       std::string memory_id, const GenerationModel& model = {});

struct PromptPair {
  std::string system;
  std::string user;
};

inline constexpr std::string_view kIgnoreText =
    "In such example, the user does not use the information the agent provides for at least one interaction, if not more.";

PromptPair render_dialogue_prompt(const Memory& m, const GenerationSpec& spec);

// Returns the "##### start dialogue" ... "##### end dialogue" block, inclusive.
// Throws MissingDelimiters.
std::string extract_dialogue_block(std::string_view output);

std::string generate_dialogue(const Memory& m, const GenerationSpec& spec, ChatClient& client,
                              const GenerationModel& model = {});

struct ReformatResult {
  Dialogue dialogue;
  std::vector<StreamToken> tokens;
  std::vector<std::string> warnings;
  bool resampled = false;  // timestamps were absent or inconsistent
};

// Parses the raw block and builds the token stream. When timestamps are missing
// or inconsistent, turn timing is rebuilt from speech rate with gaps drawn
// uniformly from [-1, 1] s (gaps next to whispers from [0, 1] s).
ReformatResult reformat(std::string_view raw, const StreamConfig& cfg, std::uint64_t seed);

// Redraws all turn timing in place; exposed for the gap-distribution check.
void resample_timing(Dialogue& d, const StreamConfig& cfg, std::mt19937_64& rng);
Millis sample_gap(std::mt19937_64& rng, double lo_seconds = -1.0, double hi_seconds = 1.0);

struct ValidationReport {
  bool pass = true;
  std::map<std::string, std::size_t> counts;  // violation kind -> occurrences
  std::vector<std::string> messages;
};

// Kinds: WhisperTooLong, NamedSpeaker, NonMonotone, TooShort.
ValidationReport validate_dialogue(const Dialogue& d);

}  // namespace earshot
