#include "earshot/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "earshot/assets.hpp"
#include "earshot/error.hpp"
#include "earshot/text.hpp"
#include "earshot/transcript.hpp"

namespace earshot {

std::string_view to_string(Principle p) {
  switch (p) {
    case Principle::Valuable: return "Valuable";
    case Principle::Pertinent: return "Pertinent";
    case Principle::Competent: return "Competent";
    case Principle::Unobtrusive: return "Unobtrusive";
    case Principle::Transparent: return "Transparent";
    case Principle::Controllable: return "Controllable";
    case Principle::Deferent: return "Deferent";
    case Principle::Anticipatory: return "Anticipatory";
    case Principle::Safe: return "Safe";
  }
  return "Valuable";
}

std::string_view to_string(ScenarioType s) {
  switch (s) {
    case ScenarioType::Presentation: return "Presentation";
    case ScenarioType::Discussion: return "Discussion";
    case ScenarioType::SharingExperiences: return "Sharing Experiences";
    case ScenarioType::Disagreement: return "Disagreement";
    case ScenarioType::Interview: return "Interview";
  }
  return "Discussion";
}

std::string_view to_string(UseCase u) { return u == UseCase::Reminding ? "Reminding" : "Social Guidance"; }

const std::vector<std::string>& keyword_list() {
  static const std::vector<std::string> list = text::asset_lines(assets::keyword_list);
  return list;
}

namespace {

std::vector<nlohmann::json> jsonl(std::string_view input, std::string_view what) {
  std::vector<nlohmann::json> out;
  std::size_t lineno = 0;
  for (auto line : text::lines(input)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::InvalidArgument, std::string(what) + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<SodaRecord> parse_soda_jsonl(std::string_view input) {
  std::vector<SodaRecord> out;
  for (const auto& j : jsonl(input, "soda")) {
    SodaRecord r;
    r.id = j.value("id", "soda_" + std::to_string(out.size()));
    r.context = j.at("context").get<std::string>();
    r.dialogue = j.at("dialogue").get<std::vector<std::string>>();
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PerltqaProfile> parse_perltqa_jsonl(std::string_view input) {
  std::vector<PerltqaProfile> out;
  for (const auto& j : jsonl(input, "perltqa")) {
    PerltqaProfile p;
    p.id = j.value("id", "perltqa_" + std::to_string(out.size()));
    p.profile = j.at("profile").get<std::string>();
    p.events = j.at("events").get<std::vector<std::string>>();
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<SodaRecord> load_soda(const std::filesystem::path& path) { return parse_soda_jsonl(read_file(path)); }
std::vector<PerltqaProfile> load_perltqa(const std::filesystem::path& path) {
  return parse_perltqa_jsonl(read_file(path));
}

const std::vector<SodaRecord>& bundled_soda() {
  static const auto v = parse_soda_jsonl(assets::standin_soda);
  return v;
}

const std::vector<PerltqaProfile>& bundled_perltqa() {
  static const auto v = parse_perltqa_jsonl(assets::standin_perltqa);
  return v;
}

SourceCorpora SourceCorpora::bundled() { return {bundled_soda(), bundled_perltqa()}; }

GenerationSpec sample_spec(MemorySource source, std::uint64_t seed, const SourceCorpora& corpora,
                           const SamplingWeights& w) {
  std::mt19937_64 rng(seed);
  GenerationSpec s;
  s.memory_source = source;
  s.rng_seed = seed;

  const auto& kw = keyword_list();
  std::vector<std::string> picked;
  std::sample(kw.begin(), kw.end(), std::back_inserter(picked), 5, rng);
  std::shuffle(picked.begin(), picked.end(), rng);
  if (source == MemorySource::Keywords) s.keywords = std::move(picked);

  std::array<std::size_t, 9> idx{};
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  s.principles = {kAllPrinciples[idx[0]], kAllPrinciples[idx[1]]};

  std::discrete_distribution<std::size_t> scen(w.scenario.begin(), w.scenario.end());
  s.scenario = kAllScenarios[scen(rng)];
  std::discrete_distribution<std::size_t> uc(w.use_case.begin(), w.use_case.end());
  s.use_case = uc(rng) == 0 ? UseCase::Reminding : UseCase::SocialGuidance;
  s.ignore_flag = std::bernoulli_distribution(std::clamp(w.ignore_probability, 0.0, 1.0))(rng);

  if (source == MemorySource::SodaContext) {
    if (corpora.soda.empty()) throw Error(ErrorCode::EmptyCorpus, "no SODA records to sample from");
    const auto& rec = corpora.soda[std::uniform_int_distribution<std::size_t>(0, corpora.soda.size() - 1)(rng)];
    s.soda_context = rec.context;
    s.seed_lines.assign(rec.dialogue.begin(), rec.dialogue.begin() + std::min<std::size_t>(3, rec.dialogue.size()));
  } else if (source == MemorySource::Perltqa) {
    if (corpora.perltqa.empty()) throw Error(ErrorCode::EmptyCorpus, "no PerLTQA profiles to sample from");
    s.perltqa_index = std::uniform_int_distribution<std::size_t>(0, corpora.perltqa.size() - 1)(rng);
  }
  return s;
}

std::string render_memory_prompt(const GenerationSpec& spec) {
  std::string p(assets::memory_generation_prompt);
  p = text::replace_all(std::move(p), "{{KEYWORDS}}", text::join(spec.keywords, ", "));
  return text::replace_all(std::move(p), "{{CONTEXT}}", spec.soda_context);
}

namespace {

std::optional<std::string> last_block(std::string_view s, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  auto at = s.rfind(open);
  if (at == std::string_view::npos) return std::nullopt;
  auto end = s.find(close, at + open.size());
  if (end == std::string_view::npos) return std::nullopt;
  auto body = text::trim(s.substr(at + open.size(), end - at - open.size()));
  if (body.empty()) return std::nullopt;
  return std::string(body);
}

}  // namespace

Memory parse_memory_output(std::string_view output, std::string memory_id, MemorySource source) {
  Memory m;
  m.memory_id = std::move(memory_id);
  m.source = source;
  auto profile = last_block(output, "user_memory");
  if (!profile) throw Error(ErrorCode::MissingTag, "generation output lacks a <user_memory> block");
  m.profile_text = *profile;
  for (int i = 1; i <= 2; ++i) {
    auto tag = "event_" + std::to_string(i);
    auto ev = last_block(output, tag);
    if (!ev) throw Error(ErrorCode::MissingTag, "generation output lacks a <" + tag + "> block");
    m.events.push_back(EventRecord::make(tag, *ev));
  }
  return m;
}

Memory generate_memory(const GenerationSpec& spec, ChatClient& client, const SourceCorpora& corpora,
                       std::string memory_id, const GenerationModel& model) {
  if (spec.memory_source == MemorySource::Perltqa) {
    if (spec.perltqa_index >= corpora.perltqa.size()) {
      throw Error(ErrorCode::OutOfRange, "PerLTQA index " + std::to_string(spec.perltqa_index) + " out of range");
    }
    const auto& p = corpora.perltqa[spec.perltqa_index];
    std::mt19937_64 rng(spec.rng_seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::string> events;
    std::sample(p.events.begin(), p.events.end(), std::back_inserter(events), 2, rng);
    Memory m;
    m.memory_id = std::move(memory_id);
    m.source = MemorySource::Perltqa;
    m.profile_text = p.profile;
    for (std::size_t i = 0; i < events.size(); ++i) {
      m.events.push_back(EventRecord::make("event_" + std::to_string(i + 1), events[i]));
    }
    return m;
  }
  if (spec.memory_source == MemorySource::Keywords && spec.keywords.size() != 5) {
    throw Error(ErrorCode::InvalidArgument, "keyword mode needs 5 keywords, got " + std::to_string(spec.keywords.size()));
  }
  ChatRequest req;
  req.model_name = model.model_name;
  req.max_tokens = model.max_tokens;
  req.temperature = model.temperature;
  req.messages = {{"user", render_memory_prompt(spec)}};
  auto res = client.complete(req);
  return parse_memory_output(res.content, std::move(memory_id), spec.memory_source);
}

PromptPair render_dialogue_prompt(const Memory& m, const GenerationSpec& spec) {
  PromptPair p;
  p.system = std::string(assets::dialogue_system_prompt);
  std::string mem = m.profile_text;
  for (const auto& e : m.events) mem += " " + e.text;
  std::string u(assets::dialogue_user_prompt);
  u = text::replace_all(std::move(u), "{convo_type}", to_string(spec.scenario));
  u = text::replace_all(std::move(u), "{use_case}", to_string(spec.use_case));
  u = text::replace_all(std::move(u), "{principles[0]}", to_string(spec.principles[0]));
  u = text::replace_all(std::move(u), "{principles[1]}", to_string(spec.principles[1]));
  u = text::replace_all(std::move(u), "{ignoreText if ignore else \"\"}", spec.ignore_flag ? kIgnoreText : "");
  u = text::replace_all(std::move(u), "{mem}", mem);
  if (spec.memory_source == MemorySource::SodaContext && !spec.seed_lines.empty()) {
    while (!u.empty() && (u.back() == '\n' || u.back() == ' ')) u.pop_back();
    u += "\n\nDialogue: " + text::join(spec.seed_lines, "\n") + "\n";
  }
  p.user = std::move(u);
  return p;
}

std::string extract_dialogue_block(std::string_view output) {
  auto start = output.find(kDialogueStart);
  if (start == std::string_view::npos) {
    throw Error(ErrorCode::MissingDelimiters, "output lacks '" + std::string(kDialogueStart) + "'");
  }
  auto end = output.find(kDialogueEnd, start);
  if (end == std::string_view::npos) {
    throw Error(ErrorCode::MissingDelimiters, "output lacks '" + std::string(kDialogueEnd) + "'");
  }
  return std::string(output.substr(start, end + kDialogueEnd.size() - start));
}

std::string generate_dialogue(const Memory& m, const GenerationSpec& spec, ChatClient& client,
                              const GenerationModel& model) {
  auto prompt = render_dialogue_prompt(m, spec);
  ChatRequest req;
  req.model_name = model.model_name;
  req.max_tokens = model.max_tokens;
  req.temperature = model.temperature;
  req.messages = {{"system", prompt.system}, {"user", prompt.user}};
  return extract_dialogue_block(client.complete(req).content);
}

Millis sample_gap(std::mt19937_64& rng, double lo_seconds, double hi_seconds) {
  double g = std::uniform_real_distribution<double>(lo_seconds, hi_seconds)(rng);
  return Millis(std::llround(g * 10.0) * 100);
}

void resample_timing(Dialogue& d, const StreamConfig& cfg, std::mt19937_64& rng) {
  std::optional<Millis> prev_end;
  bool prev_whisper = false;
  Millis last_human_start{0};
  for (auto& u : d.turns) {
    Millis speech(std::llround(static_cast<double>(u.words.size()) / cfg.words_per_second * 10.0) * 100);
    for (const auto& h : u.hesitations) speech += h.duration;
    const bool whisper = u.speaker.is_assistant();
    Millis start{0};
    if (prev_end) {
      double lo = (whisper || prev_whisper) ? 0.0 : -1.0;
      start = std::max({*prev_end + sample_gap(rng, lo, 1.0), last_human_start, Millis(0)});
    }
    u.start = start;
    u.end = start + speech;
    if (!whisper) last_human_start = start;
    prev_end = u.end;
    prev_whisper = whisper;
  }
}

namespace {

bool timing_consistent(const Dialogue& d) {
  std::optional<Millis> human_start;
  for (const auto& u : d.turns) {
    if (u.start < Millis(0) || u.end < u.start) return false;
    if (human_start && u.start < *human_start) return false;
    if (!u.speaker.is_assistant()) human_start = u.start;
  }
  return true;
}

}  // namespace

ReformatResult reformat(std::string_view raw, const StreamConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ReformatResult out;
  ParsedTranscript parsed;
  try {
    parsed = parse_transcript(raw, ParseOptions{.allow_missing_times = true});
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NonMonotonicTime) throw;
    out.warnings.push_back(std::string("timestamps discarded: ") + e.what());
    parsed = parse_transcript(raw, ParseOptions{.allow_missing_times = true, .ignore_times = true});
  }
  for (const auto& w : parsed.warnings) out.warnings.push_back("line " + std::to_string(w.line) + ": " + w.message);
  out.dialogue = std::move(parsed.dialogue);
  if (!parsed.all_timed() || !timing_consistent(out.dialogue)) {
    std::mt19937_64 rng(seed);
    resample_timing(out.dialogue, cfg, rng);
    out.resampled = true;
  }
  out.tokens = to_stream(out.dialogue, cfg);
  return out;
}

ValidationReport validate_dialogue(const Dialogue& d) {
  ValidationReport r;
  auto flag = [&](const std::string& kind, const std::string& msg) {
    ++r.counts[kind];
    r.messages.push_back(kind + ": " + msg);
    r.pass = false;
  };
  std::optional<Millis> human_start;
  std::size_t human_turns = 0;
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const auto& u = d.turns[i];
    auto where = "turn " + std::to_string(i);
    if (u.speaker.is_assistant()) {
      if (u.words.empty() || u.words.size() > 3) {
        flag("WhisperTooLong", where + " whisper has " + std::to_string(u.words.size()) + " words");
      }
      continue;
    }
    ++human_turns;
    if (!u.label.empty()) flag("NamedSpeaker", where + " uses the name '" + u.label + "'");
    if (human_start && u.start < *human_start) flag("NonMonotone", where + " starts before the previous turn");
    human_start = u.start;
  }
  if (human_turns < 2) flag("TooShort", std::to_string(human_turns) + " non-assistant turn(s)");
  return r;
}

}  // namespace earshot
