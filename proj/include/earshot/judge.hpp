#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "earshot/chat_client.hpp"
#include "earshot/datagen.hpp"
#include "earshot/dialogue.hpp"
#include "earshot/metrics.hpp"
#include "earshot/stream.hpp"
#include "json.hpp"

namespace earshot {

struct JudgeConfig {
  std::string model_name = "judge";
  int max_tokens = 4096;
  StreamConfig stream;
  // Parallel judge calls in judge_corpus.
  std::size_t max_concurrency = 4;
};

struct RubricScore {
  std::string whisper;
  int rating = 0;  // 1-5
  std::string relevancy;
  std::string timeliness;
  std::string explanation;
};

struct PrincipleRating {
  int rating = 0;
  std::string explanation;
};

struct ResponsePrinciples {
  std::string whisper;
  std::array<PrincipleRating, 9> ratings;  // in kAllPrinciples order
  std::string preferred_option;            // "<response>" or "<no response>"
  std::string no_response_reasoning;
};

struct PrincipleScores {
  std::vector<ResponsePrinciples> responses;
  PrincipleRating overall_valuable;
  PrincipleRating overall_rarity;

  // Mean over responses; nullopt when the dialogue has no whispers.
  std::optional<double> mean(Principle p) const;
};

void to_json(nlohmann::json& j, const RubricScore& s);
void to_json(nlohmann::json& j, const PrincipleScores& s);

// Judge text format: the rendered stream including whispers.
std::string render_for_judge(const Dialogue& d, const StreamConfig& cfg = {});
// Prompt asset with the silence duration filled in, followed by the dialogue.
std::string render_judge_prompt(std::string_view prompt_asset, const Dialogue& d, const StreamConfig& cfg = {});

// Pulls the outermost JSON object out of free-form judge output: code fences,
// surrounding prose and trailing commas are tolerated. Throws JudgeJsonShape.
nlohmann::json extract_judge_json(std::string_view raw);

// Strict parsers; throw JudgeJsonShape or CountMismatch.
std::vector<RubricScore> parse_rubric(std::string_view raw, std::size_t expected_whispers);
PrincipleScores parse_principles(std::string_view raw, std::size_t expected_whispers);

std::vector<RubricScore> judge_rubric(const Dialogue& d, ChatClient& client, const JudgeConfig& cfg = {});
PrincipleScores judge_principles(const Dialogue& d, ChatClient& client, const JudgeConfig& cfg = {});

struct JudgedDialogue {
  std::string dialogue_id;
  std::vector<RubricScore> rubric;
  std::optional<PrincipleScores> principles;
  std::string error;  // non-empty when judging failed
};

// Runs both judges over a corpus with at most cfg.max_concurrency calls in flight.
std::vector<JudgedDialogue> judge_corpus(const std::vector<Dialogue>& corpus, ChatClient& client,
                                         const JudgeConfig& cfg = {}, bool principles = true);

// Rubric: mean/std over every rated whisper. Principles: mean/std over the
// per-dialogue means. Failed judgements become report warnings.
void add_judge_scores(EvalReport& report, const std::vector<JudgedDialogue>& judged);

}  // namespace earshot
