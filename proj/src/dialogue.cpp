#include "earshot/dialogue.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "earshot/error.hpp"
#include "earshot/text.hpp"

namespace earshot {

Millis from_seconds(double seconds) { return Millis(std::llround(seconds * 1000.0)); }

SpeakerId SpeakerId::other(int index) {
  if (index < 1) {
    throw Error(ErrorCode::InvalidArgument, "speaker index must be >= 1, got " + std::to_string(index));
  }
  return SpeakerId(Kind::Other, index);
}

std::string SpeakerId::name() const {
  switch (kind_) {
    case Kind::User: return "User";
    case Kind::Assistant: return "Assistant";
    case Kind::Other: return "Speaker " + std::to_string(index_);
  }
  return "User";
}

std::optional<SpeakerId> SpeakerId::from_name(std::string_view name) {
  auto n = text::trim(name);
  auto lower = text::to_lower(n);
  if (lower == "user") return user();
  if (lower == "assistant") return assistant();
  if (!text::starts_with_ci(n, "speaker")) return std::nullopt;
  auto rest = text::trim(n.substr(7));
  if (!rest.empty() && rest.front() == '#') rest = text::trim(rest.substr(1));
  if (rest.empty() || rest.size() > 6) return std::nullopt;
  int idx = 0;
  for (char c : rest) {
    if (c < '0' || c > '9') return std::nullopt;
    idx = idx * 10 + (c - '0');
  }
  if (idx < 1) return std::nullopt;
  return other(idx);
}

std::string Utterance::text() const { return text::join(words); }

std::string_view to_string(DialogueSource s) {
  switch (s) {
    case DialogueSource::Synthetic: return "synthetic";
    case DialogueSource::Soda: return "soda";
    case DialogueSource::Perltqa: return "perltqa";
    case DialogueSource::Mit: return "mit";
    case DialogueSource::Live: return "live";
  }
  return "synthetic";
}

DialogueSource dialogue_source_from_string(std::string_view s) {
  auto l = text::to_lower(s);
  if (l == "synthetic") return DialogueSource::Synthetic;
  if (l == "soda") return DialogueSource::Soda;
  if (l == "perltqa") return DialogueSource::Perltqa;
  if (l == "mit") return DialogueSource::Mit;
  if (l == "live") return DialogueSource::Live;
  throw Error(ErrorCode::InvalidArgument, "unknown dialogue source '" + std::string(s) + "'");
}

std::size_t Dialogue::speaker_turn_count() const {
  return static_cast<std::size_t>(std::count_if(
      turns.begin(), turns.end(), [](const Utterance& u) { return !u.speaker.is_assistant(); }));
}

std::size_t Dialogue::whisper_count() const { return turns.size() - speaker_turn_count(); }

std::vector<std::string> invariant_violations(const Dialogue& d) {
  std::vector<std::string> out;
  const Utterance* prev_speaker_turn = nullptr;
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const auto& u = d.turns[i];
    auto where = "turn " + std::to_string(i) + ": ";
    if (u.start < Millis(0)) out.push_back(where + "negative start time");
    if (u.end < u.start) out.push_back(where + "end before start");
    for (const auto& h : u.hesitations) {
      if (h.duration <= Millis(0)) out.push_back(where + "non-positive hesitation");
      if (h.word_index > u.words.size()) out.push_back(where + "hesitation beyond last word");
    }
    if (u.speaker.is_assistant()) {
      if (u.words.empty() || u.words.size() > 3) {
        out.push_back(where + "whisper has " + std::to_string(u.words.size()) + " words");
      }
      if (prev_speaker_turn == nullptr) {
        out.push_back(where + "whisper before the first speaker turn");
      } else if (u.start < prev_speaker_turn->start) {
        out.push_back(where + "whisper starts before the turn it follows");
      }
      continue;
    }
    if (prev_speaker_turn != nullptr && u.start < prev_speaker_turn->start) {
      out.push_back(where + "start time decreases");
    }
    prev_speaker_turn = &u;
  }
  return out;
}

std::vector<Millis> turn_gaps(const Dialogue& d) {
  std::vector<Millis> gaps;
  for (std::size_t i = 1; i < d.turns.size(); ++i) {
    gaps.push_back(d.turns[i].start - d.turns[i - 1].end);
  }
  return gaps;
}

std::set<std::size_t> assist_positions(const Dialogue& d) {
  std::set<std::size_t> out;
  std::size_t seen = 0;
  for (const auto& u : d.turns) {
    if (u.speaker.is_assistant()) {
      if (seen > 0) out.insert(seen - 1);
    } else {
      ++seen;
    }
  }
  return out;
}

Dialogue strip_whispers(const Dialogue& d) {
  Dialogue out = d;
  std::erase_if(out.turns, [](const Utterance& u) { return u.speaker.is_assistant(); });
  return out;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  r.n = values.size();
  if (values.empty()) return r;
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(r.n);
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(ss / static_cast<double>(r.n));
  return r;
}

StatReport dataset_stats(std::span<const Dialogue> corpus) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "dataset_stats needs at least one dialogue");
  std::vector<double> a_sec, s_sec, gaps, a_words, s_words, others, a_turns, s_turns;
  for (const auto& d : corpus) {
    std::set<int> other_ids;
    std::size_t whispers = 0;
    std::size_t speaker_turns = 0;
    for (const auto& u : d.turns) {
      double secs = to_seconds(u.duration());
      double words = static_cast<double>(u.words.size());
      if (u.speaker.is_assistant()) {
        a_sec.push_back(secs);
        a_words.push_back(words);
        ++whispers;
      } else {
        s_sec.push_back(secs);
        s_words.push_back(words);
        ++speaker_turns;
        if (u.speaker.kind() == SpeakerId::Kind::Other) other_ids.insert(u.speaker.index());
      }
    }
    for (auto g : turn_gaps(d)) gaps.push_back(to_seconds(g));
    others.push_back(static_cast<double>(other_ids.size()));
    a_turns.push_back(static_cast<double>(whispers));
    s_turns.push_back(static_cast<double>(speaker_turns));
  }
  StatReport r;
  r.dialogues = corpus.size();
  r.assistant_seconds = mean_std(a_sec);
  r.speaker_seconds = mean_std(s_sec);
  r.turn_interval_seconds = mean_std(gaps);
  r.assistant_words = mean_std(a_words);
  r.speaker_words = mean_std(s_words);
  r.non_user_speakers = mean_std(others);
  r.assistant_turns = mean_std(a_turns);
  r.speaker_turns = mean_std(s_turns);
  return r;
}

void to_json(nlohmann::json& j, const Utterance& u) {
  j = nlohmann::json{{"speaker", u.speaker.name()},
                     {"text", u.text()},
                     {"t_start", to_seconds(u.start)},
                     {"t_end", to_seconds(u.end)},
                     {"hesitations", nlohmann::json::array()}};
  for (const auto& h : u.hesitations) {
    j["hesitations"].push_back({{"word_index", h.word_index}, {"duration_ms", h.duration.count()}});
  }
  if (!u.label.empty()) j["label"] = u.label;
}

void from_json(const nlohmann::json& j, Utterance& u) {
  auto who = SpeakerId::from_name(j.at("speaker").get<std::string>());
  if (!who) {
    throw Error(ErrorCode::InvalidArgument, "unknown speaker '" + j.at("speaker").get<std::string>() + "'");
  }
  u.speaker = *who;
  u.words = text::split_words(j.at("text").get<std::string>());
  u.start = from_seconds(j.at("t_start").get<double>());
  u.end = from_seconds(j.at("t_end").get<double>());
  u.hesitations.clear();
  if (j.contains("hesitations")) {
    for (const auto& h : j.at("hesitations")) {
      u.hesitations.push_back({h.at("word_index").get<std::size_t>(), Millis(h.at("duration_ms").get<long long>())});
    }
  }
  u.label = j.value("label", std::string{});
}

void to_json(nlohmann::json& j, const Dialogue& d) {
  j = nlohmann::json{{"id", d.id},
                     {"source", to_string(d.source)},
                     {"memory_id", d.memory_id ? nlohmann::json(*d.memory_id) : nlohmann::json(nullptr)},
                     {"turns", d.turns}};
}

void from_json(const nlohmann::json& j, Dialogue& d) {
  d.id = j.value("id", std::string{});
  d.source = dialogue_source_from_string(j.value("source", std::string("synthetic")));
  d.memory_id.reset();
  if (j.contains("memory_id") && !j.at("memory_id").is_null()) d.memory_id = j.at("memory_id").get<std::string>();
  d.turns = j.at("turns").get<std::vector<Utterance>>();
}

namespace {
nlohmann::json ms_json(const MeanStd& m) {
  if (m.n == 0) return {{"mean", nullptr}, {"std", nullptr}, {"n", 0}};
  return {{"mean", m.mean}, {"std", m.stddev}, {"n", m.n}};
}
}  // namespace

nlohmann::json to_json(const StatReport& r) {
  return {{"# dialogues", r.dialogues},
          {"Assistant Length (s)", ms_json(r.assistant_seconds)},
          {"Speaker Length (s)", ms_json(r.speaker_seconds)},
          {"Turn interval (s)", ms_json(r.turn_interval_seconds)},
          {"Assistant (words)", ms_json(r.assistant_words)},
          {"Speaker (words)", ms_json(r.speaker_words)},
          {"#non-user speakers", ms_json(r.non_user_speakers)},
          {"Assistant Turns", ms_json(r.assistant_turns)},
          {"Speaker Turns", ms_json(r.speaker_turns)}};
}

std::vector<Dialogue> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open corpus " + path.string());
  std::vector<Dialogue> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<Dialogue>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidArgument, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const Dialogue> corpus) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write corpus " + path.string());
  for (const auto& d : corpus) out << nlohmann::json(d).dump() << '\n';
}

}  // namespace earshot
