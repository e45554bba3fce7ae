#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "earshot/dialogue.hpp"
#include "earshot/orchestrator.hpp"
#include "json.hpp"

namespace earshot {

struct PraResult {
  enum class Mode { Hard, Soft };

  Mode mode = Mode::Hard;
  int window = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 1.0;
  double recall = 1.0;
  double accuracy = 1.0;
  // Set when precision or recall fell back to the empty-set convention.
  bool empty_precision = false;
  bool empty_recall = false;

  // Recomputes the ratios from the counts.
  void finalize();
  // Adds counts (corpus concatenation) and re-finalizes.
  PraResult& operator+=(const PraResult& o);
};

void to_json(nlohmann::json& j, const PraResult& r);

// predicted, truth must lie in [0, decision_points); throws OutOfRange.
PraResult hard_pra(const std::set<long>& predicted, const std::set<long>& truth, std::size_t decision_points);
// One-to-one matching within |pred - truth| <= window, maximum cardinality.
PraResult soft_pra(const std::set<long>& predicted, const std::set<long>& truth, std::size_t decision_points,
                   int window = 1);

struct ResponseStats {
  double frequency = 0;  // whispers per non-assistant turn
  std::size_t whispers = 0;
  std::size_t turns = 0;
  // Unset when there are no whispers.
  std::optional<MeanStd> word_length;
};

void to_json(nlohmann::json& j, const ResponseStats& s);

// Throws EmptyCorpus on an empty corpus.
ResponseStats response_stats(std::span<const Dialogue> corpus);
// Counts turns from the traces' decision points and whispers from non-vetoed events.
ResponseStats response_stats(std::span<const RunTrace> traces);

// Throws InvalidArgument on length mismatch or fewer than 2 points, and
// DegenerateVariance when either side is constant.
double pearson(std::span<const double> x, std::span<const double> y);

// The truth dialogue with its whispers replaced by the trace's emitted ones,
// each placed at the offset of the token that produced it. Judge input.
Dialogue apply_trace(const Dialogue& truth, const RunTrace& trace, const StreamConfig& cfg = {});

struct EvalReport {
  std::size_t dialogues = 0;
  PraResult hard;
  PraResult soft;
  ResponseStats responses;
  std::optional<MeanStd> rubric;
  // Principle name -> mean/std of the per-dialogue scores.
  std::vector<std::pair<std::string, MeanStd>> principles;
  std::optional<MeanStd> overall_valuable;
  std::optional<MeanStd> overall_rarity;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const EvalReport& r);

// Matches traces to truth dialogues by id; a trace without truth is a warning.
// Decision points per dialogue = its non-assistant turn count.
EvalReport evaluate_traces(std::span<const RunTrace> traces, std::span<const Dialogue> truth, int soft_window = 1);

}  // namespace earshot
