#include "earshot/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "earshot/error.hpp"
#include "earshot/stream.hpp"
#include "earshot/text.hpp"

namespace earshot {

void PraResult::finalize() {
  empty_precision = tp + fp == 0;
  empty_recall = tp + fn == 0;
  precision = empty_precision ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  recall = empty_recall ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  const std::size_t total = tp + fp + fn + tn;
  accuracy = total == 0 ? 1.0 : static_cast<double>(tp + tn) / static_cast<double>(total);
}

PraResult& PraResult::operator+=(const PraResult& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  finalize();
  return *this;
}

void to_json(nlohmann::json& j, const PraResult& r) {
  j = nlohmann::json{{"mode", r.mode == PraResult::Mode::Hard ? "hard" : "soft"},
                     {"window", r.window},
                     {"tp", r.tp},
                     {"fp", r.fp},
                     {"fn", r.fn},
                     {"tn", r.tn},
                     {"precision", r.precision},
                     {"recall", r.recall},
                     {"accuracy", r.accuracy},
                     {"empty_precision", r.empty_precision},
                     {"empty_recall", r.empty_recall}};
}

namespace {

void check_range(const std::set<long>& s, std::size_t n, const char* what) {
  if (n == 0) throw Error(ErrorCode::OutOfRange, "decision_points must be at least 1");
  if (!s.empty() && (*s.begin() < 0 || *s.rbegin() >= static_cast<long>(n))) {
    throw Error(ErrorCode::OutOfRange, std::string(what) + " position outside [0, " + std::to_string(n) + ")");
  }
}

PraResult counts(std::size_t tp, std::size_t n_pred, std::size_t n_truth, std::size_t n) {
  PraResult r;
  r.tp = tp;
  r.fp = n_pred - tp;
  r.fn = n_truth - tp;
  r.tn = n - r.tp - r.fp - r.fn;
  r.finalize();
  return r;
}

}  // namespace

PraResult hard_pra(const std::set<long>& predicted, const std::set<long>& truth, std::size_t decision_points) {
  check_range(predicted, decision_points, "predicted");
  check_range(truth, decision_points, "truth");
  std::size_t tp = 0;
  for (long p : predicted) tp += truth.count(p);
  return counts(tp, predicted.size(), truth.size(), decision_points);
}

PraResult soft_pra(const std::set<long>& predicted, const std::set<long>& truth, std::size_t decision_points,
                   int window) {
  if (window < 0) throw Error(ErrorCode::InvalidArgument, "window must be non-negative");
  check_range(predicted, decision_points, "predicted");
  check_range(truth, decision_points, "truth");
  // Sweep in ascending order: each truth takes the smallest unmatched prediction
  // still inside its window. Maximum cardinality for equal-width intervals.
  std::size_t tp = 0;
  auto next = predicted.begin();
  for (long t : truth) {
    while (next != predicted.end() && *next < t - window) ++next;
    if (next != predicted.end() && *next <= t + window) {
      ++tp;
      ++next;
    }
  }
  PraResult r = counts(tp, predicted.size(), truth.size(), decision_points);
  r.mode = PraResult::Mode::Soft;
  r.window = window;
  r.finalize();
  return r;
}

void to_json(nlohmann::json& j, const ResponseStats& s) {
  j = nlohmann::json{{"frequency", s.frequency}, {"whispers", s.whispers}, {"turns", s.turns}};
  if (s.word_length) {
    j["word_len_mean"] = s.word_length->mean;
    j["word_len_std"] = s.word_length->stddev;
  } else {
    j["word_len_mean"] = nullptr;
    j["word_len_std"] = nullptr;
  }
}

namespace {

ResponseStats finish_stats(std::size_t turns, const std::vector<double>& lengths) {
  ResponseStats s;
  s.turns = turns;
  s.whispers = lengths.size();
  s.frequency = turns == 0 ? 0.0 : static_cast<double>(lengths.size()) / static_cast<double>(turns);
  if (!lengths.empty()) s.word_length = mean_std(lengths);
  return s;
}

}  // namespace

ResponseStats response_stats(std::span<const Dialogue> corpus) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "response_stats needs at least one dialogue");
  std::size_t turns = 0;
  std::vector<double> lengths;
  for (const auto& d : corpus) {
    turns += d.speaker_turn_count();
    for (const auto& u : d.turns) {
      if (u.speaker.is_assistant()) lengths.push_back(static_cast<double>(u.words.size()));
    }
  }
  return finish_stats(turns, lengths);
}

ResponseStats response_stats(std::span<const RunTrace> traces) {
  if (traces.empty()) throw Error(ErrorCode::EmptyCorpus, "response_stats needs at least one trace");
  std::size_t turns = 0;
  std::vector<double> lengths;
  for (const auto& t : traces) {
    turns += t.decision_points;
    for (const auto& e : t.events) {
      if (e.vetoed || e.text.empty()) continue;
      std::size_t words = 0;
      bool in_word = false;
      for (char c : e.text) {
        bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_word) ++words;
        in_word = !space;
      }
      lengths.push_back(static_cast<double>(words));
    }
  }
  return finish_stats(turns, lengths);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "pearson: vectors differ in length");
  if (x.size() < 2) throw Error(ErrorCode::InvalidArgument, "pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::DegenerateVariance, "pearson: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Dialogue apply_trace(const Dialogue& truth, const RunTrace& trace, const StreamConfig& cfg) {
  Dialogue heard = strip_whispers(truth);
  const auto tokens = to_stream(heard, cfg);
  std::map<long, std::vector<Utterance>> after_turn;
  for (const auto& e : trace.events) {
    if (e.vetoed || e.text.empty() || e.at_turn < 0 || e.at_turn >= static_cast<long>(heard.turns.size())) continue;
    Utterance w;
    w.speaker = SpeakerId::assistant();
    w.words = text::split_words(e.text);
    const Millis at = e.at_token < tokens.size() ? tokens[e.at_token].wall_offset : heard.turns[e.at_turn].end;
    w.start = w.end = std::max(at, heard.turns[e.at_turn].start);
    after_turn[e.at_turn].push_back(std::move(w));
  }
  Dialogue out = heard;
  out.turns.clear();
  for (std::size_t i = 0; i < heard.turns.size(); ++i) {
    out.turns.push_back(heard.turns[i]);
    if (auto it = after_turn.find(static_cast<long>(i)); it != after_turn.end()) {
      for (auto& w : it->second) out.turns.push_back(std::move(w));
    }
  }
  return out;
}

nlohmann::json to_json(const EvalReport& r) {
  auto ms = [](const std::optional<MeanStd>& m) {
    return m ? nlohmann::json{{"mean", m->mean}, {"std", m->stddev}, {"n", m->n}} : nlohmann::json(nullptr);
  };
  nlohmann::json j;
  j["dialogues"] = r.dialogues;
  j["Hard Precision"] = r.hard.precision;
  j["Hard Recall"] = r.hard.recall;
  j["Hard Accuracy"] = r.hard.accuracy;
  j["Soft Precision"] = r.soft.precision;
  j["Soft Recall"] = r.soft.recall;
  j["Soft Accuracy"] = r.soft.accuracy;
  j["hard"] = r.hard;
  j["soft"] = r.soft;
  j["Response Frequency"] = r.responses.frequency;
  j["Response Word Length"] = ms(r.responses.word_length);
  j["responses"] = r.responses;
  j["Rubric Score"] = ms(r.rubric);
  nlohmann::json p = nlohmann::json::object();
  for (const auto& [name, v] : r.principles) p[name] = ms(v);
  j["Principles"] = p;
  j["Overall Valuable"] = ms(r.overall_valuable);
  j["Rarity of Interventions"] = ms(r.overall_rarity);
  j["warnings"] = r.warnings;
  return j;
}

EvalReport evaluate_traces(std::span<const RunTrace> traces, std::span<const Dialogue> truth, int soft_window) {
  std::map<std::string, const Dialogue*> by_id;
  for (const auto& d : truth) by_id[d.id] = &d;
  EvalReport r;
  r.hard.mode = PraResult::Mode::Hard;
  r.soft.mode = PraResult::Mode::Soft;
  r.soft.window = soft_window;
  r.hard.tp = r.hard.fp = r.hard.fn = r.hard.tn = 0;
  r.soft.tp = r.soft.fp = r.soft.fn = r.soft.tn = 0;
  std::vector<RunTrace> matched;
  for (const auto& t : traces) {
    auto it = by_id.find(t.dialogue_id);
    if (it == by_id.end()) {
      r.warnings.push_back("no truth dialogue for trace '" + t.dialogue_id + "'");
      continue;
    }
    const Dialogue& d = *it->second;
    const std::size_t n = d.speaker_turn_count();
    if (n == 0) {
      r.warnings.push_back("dialogue '" + d.id + "' has no decision points");
      continue;
    }
    std::set<long> truth_turns;
    for (auto a : assist_positions(d)) truth_turns.insert(static_cast<long>(a));
    r.hard += hard_pra(t.predicted_turns, truth_turns, n);
    r.soft += soft_pra(t.predicted_turns, truth_turns, n, soft_window);
    RunTrace copy = t;
    copy.decision_points = n;
    matched.push_back(std::move(copy));
    ++r.dialogues;
  }
  r.hard.finalize();
  r.soft.finalize();
  if (!matched.empty()) r.responses = response_stats(std::span<const RunTrace>(matched));
  if (r.hard.empty_precision || r.hard.empty_recall) r.warnings.push_back("empty-set convention applied (P or R = 1)");
  return r;
}

}  // namespace earshot
