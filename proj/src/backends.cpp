#include "earshot/backends.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include "earshot/error.hpp"
#include "earshot/text.hpp"

namespace earshot {

TriggerBackend::TriggerBackend(double threshold) { set_threshold(threshold); }

void TriggerBackend::set_threshold(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::BadConfig, "trigger threshold must be in [0, 1]");
  threshold_ = t;
}

void TriggerBackend::observe(const StreamToken& t) {
  ++state_.tokens_observed;
  state_.last_is_silence = t.is_silence();
  on_observe(t);
}

TriggerDecision TriggerBackend::decide() {
  if (state_.tokens_observed == 0 || !state_.last_is_silence) {
    throw Error(ErrorCode::NotAtSilence,
                "decide() after token " + std::to_string(state_.tokens_observed) + ", which is not a silence");
  }
  TriggerDecision d;
  d.probability = std::clamp(score(), 0.0, 1.0);
  d.fire = d.probability >= threshold_;
  d.at_token = state_.tokens_observed - 1;
  state_.last_decision = d;
  return d;
}

WhisperResult WhisperResult::text_of(std::vector<std::string> words) {
  WhisperResult r;
  r.kind = Kind::Text;
  r.words = std::move(words);
  return r;
}

WhisperResult WhisperResult::veto() { return WhisperResult{}; }

std::string WhisperResult::text() const { return text::join(words); }

namespace {

const std::vector<std::string_view> kEosMarkers = {"<|eot_id|>", "<|end_of_text|>", "<|endoftext|>", "</s>", "<eos>",
                                                   "<|im_end|>"};

bool is_veto_literal(const std::string& lower) {
  return lower.empty() || lower == "eos" || lower == "<no response>" || lower == "no response" ||
         lower == "<no_response>" || lower == "none" || lower == "<none>";
}

std::string_view strip_quotes(std::string_view s) {
  while (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
    s = text::trim(s.substr(1, s.size() - 2));
  }
  return s;
}

}  // namespace

WhisperResult normalize_whisper(std::string_view raw) {
  std::string s(text::trim(raw));
  for (auto m : kEosMarkers) s = text::replace_all(std::move(s), m, " ");
  std::string_view v = strip_quotes(text::trim(s));
  if (v.size() >= 2 && v.front() == '(' && v.back() == ')') v = text::trim(v.substr(1, v.size() - 2));
  for (std::string_view prefix : {"agent:", "whisper:", "assistant:"}) {
    if (text::starts_with_ci(v, prefix)) v = text::trim(v.substr(prefix.size()));
  }
  v = strip_quotes(v);
  if (is_veto_literal(text::to_lower(v))) return WhisperResult::veto();

  auto words = text::split_words(v);
  if (words.empty()) return WhisperResult::veto();
  std::vector<std::string> warnings;
  if (words.size() > 3) {
    warnings.push_back("whisper truncated from " + std::to_string(words.size()) + " to 3 words");
    words.resize(3);
  }
  auto r = WhisperResult::text_of(std::move(words));
  r.warnings = std::move(warnings);
  return r;
}

ResponderBackend::ResponderBackend(std::size_t window) : capacity_(window) {
  if (capacity_ == 0) throw Error(ErrorCode::BadConfig, "responder window must be positive");
}

void ResponderBackend::observe(const StreamToken& t) {
  ++observed_;
  if (t.kind == StreamToken::Kind::SpeakerChange && !t.speaker.is_assistant()) ++turn_;
  window_.push_back(t);
  if (window_.size() > capacity_) window_.pop_front();
}

WhisperResult ResponderBackend::respond(const std::string& memory_context) {
  ResponderInput in;
  in.memory_context = &memory_context;
  in.window = &window_;
  in.turn = turn_;
  in.at_token = observed_ == 0 ? 0 : observed_ - 1;
  auto r = generate(in);
  if (r.kind == WhisperResult::Kind::Text && (r.words.empty() || r.words.size() > 3)) {
    throw Error(ErrorCode::BackendProtocol, "responder produced " + std::to_string(r.words.size()) + " words");
  }
  return r;
}

OracleScript OracleScript::from_dialogue(const Dialogue& d) {
  OracleScript s;
  long turn = -1;
  for (const auto& u : d.turns) {
    if (!u.speaker.is_assistant()) {
      ++turn;
      s.turn_words[turn] = u.words.size();
      continue;
    }
    if (turn < 0 || s.fire_at.count(turn)) continue;
    s.fire_at.insert(turn);
    s.responses[turn] = u.text();
  }
  return s;
}

void to_json(nlohmann::json& j, const OracleScript& s) {
  j = nlohmann::json{{"fire_at", s.fire_at}, {"responses", nlohmann::json::object()}};
  for (const auto& [turn, text] : s.responses) {
    j["responses"][std::to_string(turn)] = text ? nlohmann::json(*text) : nlohmann::json(nullptr);
  }
  if (!s.turn_words.empty()) {
    j["turn_words"] = nlohmann::json::object();
    for (const auto& [turn, n] : s.turn_words) j["turn_words"][std::to_string(turn)] = n;
  }
}

void from_json(const nlohmann::json& j, OracleScript& s) {
  s = OracleScript{};
  for (const auto& v : j.at("fire_at")) s.fire_at.insert(v.get<long>());
  const auto responses = j.value("responses", nlohmann::json::object());
  for (const auto& [key, v] : responses.items()) {
    s.responses[std::stol(key)] = v.is_null() ? std::nullopt : std::optional<std::string>(v.get<std::string>());
  }
  const auto turn_words = j.value("turn_words", nlohmann::json::object());
  for (const auto& [key, v] : turn_words.items()) {
    s.turn_words[std::stol(key)] = v.get<std::size_t>();
  }
}

OracleTrigger::OracleTrigger(OracleScript script, double threshold)
    : TriggerBackend(threshold), script_(std::move(script)) {}

void OracleTrigger::on_observe(const StreamToken& t) {
  if (t.kind == StreamToken::Kind::SpeakerChange && !t.speaker.is_assistant()) {
    ++turn_;
    words_in_turn_ = 0;
  } else if (t.kind == StreamToken::Kind::Word) {
    ++words_in_turn_;
  }
}

double OracleTrigger::score() {
  if (turn_ < 0 || !script_.fire_at.count(turn_) || fired_.count(turn_)) return 0.0;
  if (auto it = script_.turn_words.find(turn_); it != script_.turn_words.end() && words_in_turn_ < it->second) {
    return 0.0;
  }
  fired_.insert(turn_);
  return 1.0;
}

OracleResponder::OracleResponder(OracleScript script, std::size_t window)
    : ResponderBackend(window), script_(std::move(script)) {}

WhisperResult OracleResponder::generate(const ResponderInput& in) {
  auto it = script_.responses.find(in.turn);
  if (it == script_.responses.end() || !it->second) return WhisperResult::veto();
  return normalize_whisper(*it->second);
}

QuestionTrigger::QuestionTrigger(double threshold, std::size_t min_silences)
    : TriggerBackend(threshold), min_silences_(min_silences) {
  if (min_silences_ == 0) throw Error(ErrorCode::BadConfig, "min_silences must be positive");
}

void QuestionTrigger::on_observe(const StreamToken& t) {
  switch (t.kind) {
    case StreamToken::Kind::SpeakerChange:
      speaker_ = t.speaker;
      run_ = 0;
      // The user answering keeps the question open; anyone else moves on.
      if (!t.speaker.is_user()) armed_ = false;
      break;
    case StreamToken::Kind::Word:
      run_ = 0;
      if (!speaker_.is_user() && !t.text.empty() && t.text.back() == '?') armed_ = true;
      break;
    case StreamToken::Kind::Silence:
      ++run_;
      break;
    case StreamToken::Kind::WhisperWord:
      armed_ = false;
      run_ = 0;
      break;
  }
}

double QuestionTrigger::score() {
  if (!armed_) return 0.0;
  if (run_ >= min_silences_) return 0.9;
  return 0.1 * static_cast<double>(run_);
}

namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> s = {
      "a",     "an",    "the",   "and",  "or",    "but",   "if",    "of",    "to",    "in",    "on",    "at",
      "for",   "with",  "by",    "from", "is",    "are",   "was",   "were",  "be",    "been",  "it",    "its",
      "this",  "that",  "these", "those", "i",    "you",   "he",    "she",   "we",    "they",  "me",    "him",
      "her",   "us",    "them",  "my",   "your",  "his",   "our",   "their", "what",  "which", "who",   "whom",
      "when",  "where", "why",   "how",  "do",    "does",  "did",   "have",  "has",   "had",   "not",   "no",
      "so",    "as",    "can",   "could", "would", "should", "will", "just",  "about", "also",  "very",  "there",
      "here",  "then",  "than",  "too",  "some",  "any",   "all",   "more",  "most",  "into",  "out",   "up",
      "down",  "over",  "again", "am",   "one",   "well",  "yes",   "oh",    "really", "like", "get",   "got"};
  return s;
}

std::string bare(std::string_view w) {
  std::string out;
  for (char c : w) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || static_cast<unsigned char>(c) >= 0x80) out += c;
  }
  while (!out.empty() && out.back() == '\'') out.pop_back();
  if (out.size() > 2 && out.ends_with("'s")) out.resize(out.size() - 2);
  return out;
}

bool content_word(const std::string& lower) { return lower.size() > 2 && !stopwords().count(lower); }

std::vector<std::string> sentences(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    cur += c;
    if (c == '.' || c == '!' || c == '?' || c == '\n') {
      if (!text::trim(cur).empty()) out.emplace_back(text::trim(cur));
      cur.clear();
    }
  }
  if (!text::trim(cur).empty()) out.emplace_back(text::trim(cur));
  return out;
}

}  // namespace

KeywordResponder::KeywordResponder(std::size_t window) : ResponderBackend(window) {}

WhisperResult KeywordResponder::generate(const ResponderInput& in) {
  // Only the latest few dozen spoken words matter for relevance.
  std::unordered_set<std::string> recent;
  std::size_t taken = 0;
  for (auto it = in.window->rbegin(); it != in.window->rend() && taken < 40; ++it) {
    if (it->kind != StreamToken::Kind::Word && it->kind != StreamToken::Kind::WhisperWord) continue;
    auto w = text::to_lower(bare(it->text));
    if (content_word(w)) recent.insert(w);
    ++taken;
  }
  if (recent.empty() || in.memory_context == nullptr) return WhisperResult::veto();

  std::size_t best_overlap = 0;
  std::vector<std::string> best_new;
  for (const auto& sent : sentences(*in.memory_context)) {
    std::size_t overlap = 0;
    std::vector<std::string> fresh;
    std::unordered_set<std::string> seen;
    const auto toks = text::split_words(sent);
    for (std::size_t k = 0; k < toks.size(); ++k) {
      auto b = bare(toks[k]);
      auto l = text::to_lower(b);
      if (!content_word(l) || !seen.insert(l).second) continue;
      if (recent.count(l)) ++overlap;
      // Sentence-initial words are usually the subject; keep them out of the whisper.
      else if (k > 0) fresh.push_back(b);
    }
    if (overlap > best_overlap && !fresh.empty()) {
      best_overlap = overlap;
      best_new = std::move(fresh);
    }
  }
  if (best_overlap < 2 || best_new.empty()) return WhisperResult::veto();
  // Capitalized words (names, places) first.
  std::stable_partition(best_new.begin(), best_new.end(),
                        [](const std::string& w) { return std::isupper(static_cast<unsigned char>(w[0])); });
  if (best_new.size() > 2) best_new.resize(2);
  return WhisperResult::text_of(std::move(best_new));
}

}  // namespace earshot
