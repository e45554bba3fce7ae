#include "earshot/transcript.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <regex>

#include "earshot/error.hpp"
#include "earshot/text.hpp"

namespace earshot {

namespace {

struct RawLine {
  std::size_t lineno = 0;
  bool whisper = false;
  std::optional<SpeakerId> speaker;  // unset for named speakers
  std::string label;
  std::string body;
  std::optional<Millis> start;
  std::optional<Millis> end;
};

[[noreturn]] void malformed(std::size_t lineno, const std::string& why) {
  throw Error(ErrorCode::MalformedLine, "line " + std::to_string(lineno) + ": " + why);
}

// "12.3", "1:02.5", "1:02:03"; rounded to 100 ms.
std::optional<Millis> parse_time(std::string_view s) {
  s = text::trim(s);
  if (s.empty()) return std::nullopt;
  double total = 0.0;
  std::size_t fields = 0;
  std::size_t pos = 0;
  while (true) {
    auto colon = s.find(':', pos);
    auto part = s.substr(pos, colon == std::string_view::npos ? std::string_view::npos : colon - pos);
    if (part.empty()) return std::nullopt;
    bool dot = false;
    for (char c : part) {
      if (c == '.') {
        if (dot) return std::nullopt;
        dot = true;
      } else if (c < '0' || c > '9') {
        return std::nullopt;
      }
    }
    double v = std::stod(std::string(part));
    total = total * 60.0 + v;
    if (++fields > 3) return std::nullopt;
    if (colon == std::string_view::npos) break;
    pos = colon + 1;
  }
  return Millis(std::llround(total * 10.0) * 100);
}

// Splits "label [time]" / "text [time]" into the part before the bracket and the
// time, when the trailing bracket parses as one.
std::pair<std::string_view, std::optional<Millis>> split_trailing_time(std::string_view s) {
  s = text::trim(s);
  if (s.empty() || s.back() != ']') return {s, std::nullopt};
  auto open = s.rfind('[');
  if (open == std::string_view::npos) return {s, std::nullopt};
  auto t = parse_time(s.substr(open + 1, s.size() - open - 2));
  if (!t) return {s, std::nullopt};
  return {text::trim(s.substr(0, open)), t};
}

std::pair<std::optional<Millis>, std::string_view> split_leading_time(std::string_view s) {
  s = text::trim(s);
  if (s.empty() || s.front() != '[') return {std::nullopt, s};
  auto close = s.find(']');
  if (close == std::string_view::npos) return {std::nullopt, s};
  auto t = parse_time(s.substr(1, close - 1));
  if (!t) return {std::nullopt, s};
  return {t, text::trim(s.substr(close + 1))};
}

std::string strip_bold(std::string_view s) { return text::replace_all(std::string(s), "**", ""); }

bool is_whisper_label(const std::string& lower) {
  return lower == "whisper" || lower == "agent" || lower == "assistant" ||
         lower.rfind("whispering agent", 0) == 0 || lower.rfind("whisper agent", 0) == 0;
}

bool plausible_name(std::string_view label) {
  if (label.empty() || text::word_count(label) > 4) return false;
  return std::all_of(label.begin(), label.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return std::isalpha(u) || c == ' ' || c == '.' || c == '\'' || c == '-' || u >= 0x80;
  });
}

// Finds the label/body separator: the first ':' outside [...] brackets.
std::size_t label_colon(std::string_view line) {
  int depth = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '[') ++depth;
    else if (line[i] == ']') depth = std::max(0, depth - 1);
    else if (line[i] == ':' && depth == 0) return i;
  }
  return std::string_view::npos;
}

RawLine parse_line(std::string_view line, std::size_t lineno) {
  RawLine r;
  r.lineno = lineno;
  auto colon = label_colon(line);
  if (colon == std::string_view::npos) malformed(lineno, "expected '<speaker>: <text>'");
  auto head = strip_bold(line.substr(0, colon));
  std::string body = strip_bold(line.substr(colon + 1));

  auto [label_part, start] = split_trailing_time(head);
  std::string label(text::trim(label_part));
  if (label.rfind("##", 0) == 0) {
    r.whisper = true;
    label = std::string(text::trim(std::string_view(label).substr(label.find_first_not_of('#'))));
  }
  auto lower = text::to_lower(label);
  if (r.whisper || is_whisper_label(lower)) {
    r.whisper = true;
    r.speaker = SpeakerId::assistant();
  } else if (auto id = SpeakerId::from_name(label)) {
    r.speaker = *id;
  } else if (text::starts_with_ci(label, "speaker") || !plausible_name(label)) {
    malformed(lineno, "unknown speaker '" + label + "'");
  } else {
    r.label = label;
  }

  // Some generators put the start time after the colon instead.
  auto [lead, rest] = split_leading_time(body);
  if (!start && lead) start = lead;
  auto [text_part, end] = split_trailing_time(rest);
  r.body = std::string(text_part);
  r.start = start;
  r.end = end;
  return r;
}

const std::regex& hesitation_re() {
  static const std::regex re(R"(\(\s*hesitation\s+([0-9]+(?:\.[0-9]+)?)\s*(ms|s)?\s*\))", std::regex::icase);
  return re;
}

void extract_hesitations(const std::string& body, Utterance& u) {
  std::size_t last = 0;
  for (auto it = std::sregex_iterator(body.begin(), body.end(), hesitation_re()); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    auto before = text::split_words(std::string_view(body).substr(last, m.position(0) - last));
    u.words.insert(u.words.end(), before.begin(), before.end());
    double v = std::stod(m[1].str());
    bool seconds = m[2].matched && text::to_lower(m[2].str()) == "s";
    Millis dur(std::llround(seconds ? v * 1000.0 : v));
    if (dur > Millis(0)) {
      if (!u.hesitations.empty() && u.hesitations.back().word_index == u.words.size()) {
        u.hesitations.back().duration += dur;
      } else {
        u.hesitations.push_back({u.words.size(), dur});
      }
    }
    last = static_cast<std::size_t>(m.position(0) + m.length(0));
  }
  auto tail = text::split_words(std::string_view(body).substr(last));
  u.words.insert(u.words.end(), tail.begin(), tail.end());
}

std::string format_time(Millis t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", to_seconds(t));
  return buf;
}

}  // namespace

bool ParsedTranscript::all_timed() const {
  return std::all_of(timed.begin(), timed.end(), [](bool b) { return b; });
}

ParsedTranscript parse_transcript(std::string_view input, const ParseOptions& opts) {
  auto all = text::lines(input);
  bool delimited = input.find(kDialogueStart) != std::string_view::npos;
  bool inside = !delimited;

  std::vector<RawLine> raw;
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto line = text::trim(all[i]);
    if (line.starts_with("#####")) {
      auto lower = text::to_lower(line);
      if (lower.find("start dialogue") != std::string::npos) inside = true;
      else if (lower.find("end dialogue") != std::string::npos) inside = false;
      continue;
    }
    if (!inside || line.empty()) continue;
    raw.push_back(parse_line(line, i + 1));
  }

  int max_index = 0;
  for (const auto& r : raw) {
    if (r.speaker && r.speaker->kind() == SpeakerId::Kind::Other) max_index = std::max(max_index, r.speaker->index());
  }
  std::map<std::string, int> named;

  ParsedTranscript out;
  std::optional<Millis> last_start;
  for (const auto& r : raw) {
    Utterance u;
    if (r.speaker) {
      u.speaker = *r.speaker;
    } else {
      auto [it, fresh] = named.emplace(r.label, 0);
      if (fresh) it->second = max_index + static_cast<int>(named.size());
      u.speaker = SpeakerId::other(it->second);
      u.label = r.label;
    }
    extract_hesitations(r.body, u);

    bool timed = r.start && r.end && !opts.ignore_times;
    if (!timed) {
      if (!opts.allow_missing_times && !opts.ignore_times) malformed(r.lineno, "missing [start] or [end] time");
    } else {
      u.start = *r.start;
      u.end = *r.end;
      if (u.end < u.start) malformed(r.lineno, "end time before start time");
      if (!u.speaker.is_assistant()) {
        if (last_start && u.start < *last_start) {
          throw Error(ErrorCode::NonMonotonicTime, "line " + std::to_string(r.lineno) + ": start " +
                                                       format_time(u.start) + " precedes " + format_time(*last_start));
        }
        last_start = u.start;
      }
    }
    if (u.speaker.is_assistant() && (u.words.empty() || u.words.size() > 3)) {
      out.warnings.push_back({r.lineno, "WhisperTooLong: whisper has " + std::to_string(u.words.size()) + " words"});
    }
    out.timed.push_back(timed);
    out.dialogue.turns.push_back(std::move(u));
  }
  return out;
}

std::string render_transcript(const Dialogue& d, bool with_delimiters) {
  std::string out;
  if (with_delimiters) out += std::string(kDialogueStart) + "\n";
  for (const auto& u : d.turns) {
    std::string label = u.speaker.is_assistant() ? "##Whisper" : (u.label.empty() ? u.speaker.name() : u.label);
    out += label + " [" + format_time(u.start) + "]:";
    std::size_t h = 0;
    for (std::size_t i = 0; i <= u.words.size(); ++i) {
      for (; h < u.hesitations.size() && u.hesitations[h].word_index == i; ++h) {
        out += " (hesitation " + std::to_string(u.hesitations[h].duration.count()) + " ms)";
      }
      if (i < u.words.size()) out += " " + u.words[i];
    }
    out += " [" + format_time(u.end) + "]\n";
  }
  if (with_delimiters) out += std::string(kDialogueEnd) + "\n";
  return out;
}

}  // namespace earshot
