#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "earshot/dialogue.hpp"
#include "earshot/stream.hpp"
#include "json.hpp"

namespace earshot {

struct AugmentConfig {
  double drop_rate = 0.02;
  double flip_rate = 0.03;
  double phonetic_rate = 0.01;
  std::uint64_t rng_seed = 0;

  void validate() const;  // InvalidArgument unless every rate is in [0, 1]
};

struct AugmentStats {
  std::size_t words = 0;
  std::size_t drops = 0;
  std::size_t flips = 0;
  std::size_t phonetic = 0;
};

// word -> phonetic neighbours, keys lower-cased.
class HomophoneLexicon {
 public:
  // Lines "word<TAB>neighbor"; '#' lines are comments.
  static HomophoneLexicon parse(std::string_view tsv);
  static const HomophoneLexicon& bundled();

  const std::vector<std::string>* neighbors(std::string_view word) const;
  std::size_t size() const { return map_.size(); }

 private:
  std::map<std::string, std::vector<std::string>, std::less<>> map_;
};

// Per word, in order: drop; else swap with the next word; else replace with a
// lexicon neighbour (skipped when the word has none).
std::vector<std::string> augment(const std::vector<std::string>& words, const AugmentConfig& cfg, std::mt19937_64& rng,
                                 const HomophoneLexicon& lex = HomophoneLexicon::bundled(),
                                 AugmentStats* stats = nullptr);
// Seeds a fresh generator from cfg.rng_seed.
std::vector<std::string> augment(const std::vector<std::string>& words, const AugmentConfig& cfg);

// Applies augment() to each run of consecutive Word tokens; other tokens pass through.
std::vector<StreamToken> augment_stream(const std::vector<StreamToken>& tokens, const AugmentConfig& cfg,
                                        std::mt19937_64& rng, AugmentStats* stats = nullptr);

struct TrainExample {
  std::string dialogue_id;
  long position = 0;  // non-assistant turn index
  bool positive = false;
  std::string context;                // rendered stream ending with a silence marker
  std::optional<std::string> target;  // whisper text; nullopt = EOS

  bool operator==(const TrainExample&) const = default;
};

void to_json(nlohmann::json& j, const TrainExample& e);
void from_json(const nlohmann::json& j, TrainExample& e);

struct ResponderExportConfig {
  double negative_fraction = 0.25;
  std::size_t max_negatives_per_positive = 10;  // per dialogue
  std::uint64_t seed = 0;
  StreamConfig stream;
  std::optional<AugmentConfig> augment;
};

struct ExportResult {
  std::vector<TrainExample> examples;
  std::vector<std::string> warnings;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// Legal negative positions: non-assistant turns at least two turns from every assist.
std::vector<long> negative_candidates(const Dialogue& d);

ExportResult build_responder_examples(std::span<const Dialogue> corpus, const ResponderExportConfig& cfg);

struct TriggerLabel {
  std::string dialogue_id;
  std::size_t token_index = 0;
  long turn = -1;
  int label = 0;
  // Rendered stream shared by every label of a dialogue; the context of this
  // label is its first context_length characters.
  std::shared_ptr<const std::string> rendered;
  std::size_t context_length = 0;

  std::string context() const { return rendered ? rendered->substr(0, context_length) : std::string{}; }
};

// One instance per Silence token; label 1 for the silence run directly before a whisper.
std::vector<TriggerLabel> build_trigger_labels(std::span<const Dialogue> corpus, const StreamConfig& cfg = {});

void write_examples(const std::filesystem::path& path, std::span<const TrainExample> examples);
std::vector<TrainExample> read_examples(const std::filesystem::path& path);
void write_trigger_labels(const std::filesystem::path& path, std::span<const TriggerLabel> labels);

}  // namespace earshot
