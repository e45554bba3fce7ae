#include "earshot/train_export.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "earshot/assets.hpp"
#include "earshot/error.hpp"
#include "earshot/text.hpp"

namespace earshot {

void AugmentConfig::validate() const {
  for (double r : {drop_rate, flip_rate, phonetic_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidArgument, "augmentation rates must be in [0, 1]");
  }
}

HomophoneLexicon HomophoneLexicon::parse(std::string_view tsv) {
  HomophoneLexicon lex;
  for (const auto& line : text::asset_lines(tsv)) {
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(ErrorCode::InvalidArgument, "lexicon line without tab: " + line);
    auto word = text::to_lower(text::trim(std::string_view(line).substr(0, tab)));
    std::string neighbor(text::trim(std::string_view(line).substr(tab + 1)));
    if (word.empty() || neighbor.empty()) continue;
    auto& v = lex.map_[word];
    if (std::find(v.begin(), v.end(), neighbor) == v.end()) v.push_back(neighbor);
  }
  return lex;
}

const HomophoneLexicon& HomophoneLexicon::bundled() {
  static const HomophoneLexicon lex = parse(assets::homophone_lexicon);
  return lex;
}

const std::vector<std::string>* HomophoneLexicon::neighbors(std::string_view word) const {
  auto it = map_.find(text::to_lower(word));
  return it == map_.end() ? nullptr : &it->second;
}

namespace {

std::string match_case(const std::string& original, std::string replacement) {
  if (!original.empty() && std::isupper(static_cast<unsigned char>(original[0])) && !replacement.empty()) {
    replacement[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement[0])));
  }
  return replacement;
}

}  // namespace

std::vector<std::string> augment(const std::vector<std::string>& words, const AugmentConfig& cfg, std::mt19937_64& rng,
                                 const HomophoneLexicon& lex, AugmentStats* stats) {
  cfg.validate();
  std::bernoulli_distribution drop(cfg.drop_rate), flip(cfg.flip_rate), phon(cfg.phonetic_rate);
  std::vector<std::string> w = words;
  std::vector<std::string> out;
  out.reserve(w.size());
  AugmentStats local;
  local.words = w.size();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (drop(rng)) {
      ++local.drops;
      continue;
    }
    if (flip(rng)) {
      if (i + 1 < w.size()) {
        std::swap(w[i], w[i + 1]);
        ++local.flips;
      }
    } else if (phon(rng)) {
      if (const auto* n = lex.neighbors(w[i]); n && !n->empty()) {
        const auto& pick = (*n)[std::uniform_int_distribution<std::size_t>(0, n->size() - 1)(rng)];
        w[i] = match_case(w[i], pick);
        ++local.phonetic;
      }
    }
    out.push_back(w[i]);
  }
  if (stats) {
    stats->words += local.words;
    stats->drops += local.drops;
    stats->flips += local.flips;
    stats->phonetic += local.phonetic;
  }
  return out;
}

std::vector<std::string> augment(const std::vector<std::string>& words, const AugmentConfig& cfg) {
  std::mt19937_64 rng(cfg.rng_seed);
  return augment(words, cfg, rng);
}

std::vector<StreamToken> augment_stream(const std::vector<StreamToken>& tokens, const AugmentConfig& cfg,
                                        std::mt19937_64& rng, AugmentStats* stats) {
  std::vector<StreamToken> out;
  out.reserve(tokens.size());
  std::size_t i = 0;
  while (i < tokens.size()) {
    if (tokens[i].kind != StreamToken::Kind::Word) {
      out.push_back(tokens[i++]);
      continue;
    }
    std::size_t j = i;
    std::vector<std::string> run;
    while (j < tokens.size() && tokens[j].kind == StreamToken::Kind::Word) run.push_back(tokens[j++].text);
    auto noisy = augment(run, cfg, rng, HomophoneLexicon::bundled(), stats);
    // Surviving words keep the offsets of the run's last positions.
    std::size_t skip = run.size() - noisy.size();
    for (std::size_t k = 0; k < noisy.size(); ++k) {
      out.push_back(StreamToken::word(std::move(noisy[k]), tokens[i + skip + k].wall_offset));
    }
    i = j;
  }
  return out;
}

void to_json(nlohmann::json& j, const TrainExample& e) {
  j = nlohmann::json{{"dialogue_id", e.dialogue_id},
                     {"position", e.position},
                     {"label", e.positive ? "positive" : "negative"},
                     {"context", e.context},
                     {"target", e.target ? nlohmann::json(*e.target) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, TrainExample& e) {
  e.dialogue_id = j.at("dialogue_id").get<std::string>();
  e.position = j.at("position").get<long>();
  e.positive = j.at("label").get<std::string>() == "positive";
  e.context = j.at("context").get<std::string>();
  e.target = j.at("target").is_null() ? std::nullopt : std::optional<std::string>(j["target"].get<std::string>());
}

std::vector<long> negative_candidates(const Dialogue& d) {
  auto assists = assist_positions(d);
  std::vector<long> out;
  const long n = static_cast<long>(d.speaker_turn_count());
  for (long p = 0; p < n; ++p) {
    bool far = std::all_of(assists.begin(), assists.end(),
                           [&](std::size_t a) { return std::labs(p - static_cast<long>(a)) >= 2; });
    if (far) out.push_back(p);
  }
  return out;
}

namespace {

struct Prepared {
  const Dialogue* dialogue = nullptr;
  std::string rendered;
  std::vector<std::size_t> prefix_end;
  std::vector<StreamToken> tokens;
  std::map<long, std::size_t> turn_last_token;  // turn -> index of its last token
  std::vector<std::pair<long, std::size_t>> whisper_starts;  // (turn, first WhisperWord index)
};

Prepared prepare(const Dialogue& d, const StreamConfig& cfg, const std::optional<AugmentConfig>& aug,
                 std::mt19937_64& rng) {
  Prepared p;
  p.dialogue = &d;
  p.tokens = to_stream(d, cfg);
  if (aug) p.tokens = augment_stream(p.tokens, *aug, rng);
  p.rendered = render_stream(p.tokens, p.prefix_end);
  auto turns = token_turns(p.tokens);
  for (std::size_t i = 0; i < p.tokens.size(); ++i) {
    if (turns[i] >= 0) p.turn_last_token[turns[i]] = i;
    bool starts_whisper = p.tokens[i].kind == StreamToken::Kind::WhisperWord &&
                          (i == 0 || p.tokens[i - 1].kind != StreamToken::Kind::WhisperWord);
    if (starts_whisper && turns[i] >= 0) p.whisper_starts.emplace_back(turns[i], i);
  }
  return p;
}

// Rendered prefix through token `last`, guaranteed to end with a silence marker.
std::string context_through(const Prepared& p, std::size_t last) {
  std::string ctx = p.rendered.substr(0, p.prefix_end[last]);
  if (!p.tokens[last].is_silence()) {
    if (!ctx.empty() && ctx.back() != '\n') ctx += ' ';
    ctx += kSilenceMarker;
  }
  return ctx;
}

std::string whisper_text(const Prepared& p, std::size_t first) {
  std::vector<std::string> words;
  for (std::size_t i = first; i < p.tokens.size() && p.tokens[i].kind == StreamToken::Kind::WhisperWord; ++i) {
    words.push_back(p.tokens[i].text);
  }
  return text::join(words);
}

}  // namespace

ExportResult build_responder_examples(std::span<const Dialogue> corpus, const ResponderExportConfig& cfg) {
  if (!(cfg.negative_fraction >= 0.0 && cfg.negative_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "negative_fraction must be in [0, 1)");
  }
  std::mt19937_64 rng(cfg.seed);
  ExportResult res;

  struct Source {
    std::size_t prepared;
    std::vector<long> candidates;
    std::size_t cap;
    std::size_t used = 0;
  };
  std::vector<Prepared> prepared;
  prepared.reserve(corpus.size());
  std::vector<Source> sources;
  for (const auto& d : corpus) {
    prepared.push_back(prepare(d, cfg.stream, cfg.augment, rng));
    const auto& p = prepared.back();
    std::set<long> seen;
    std::size_t pos_here = 0;
    for (const auto& [turn, first] : p.whisper_starts) {
      if (!seen.insert(turn).second) continue;
      TrainExample e;
      e.dialogue_id = d.id;
      e.position = turn;
      e.positive = true;
      e.context = context_through(p, first - 1);
      e.target = whisper_text(p, first);
      res.examples.push_back(std::move(e));
      ++pos_here;
    }
    if (pos_here == 0) continue;
    auto cands = negative_candidates(d);
    if (cands.empty()) {
      res.warnings.push_back("InsufficientNegatives: dialogue '" + d.id + "' has no turn two away from an assist");
      continue;
    }
    sources.push_back({prepared.size() - 1, std::move(cands), pos_here * cfg.max_negatives_per_positive});
  }
  res.positives = res.examples.size();

  const double q = cfg.negative_fraction;
  const auto wanted = static_cast<std::size_t>(std::llround(static_cast<double>(res.positives) * q / (1.0 - q)));
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (sources[i].cap > 0) open.push_back(i);
  }
  while (res.negatives < wanted && !open.empty()) {
    std::size_t slot = std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng);
    auto& src = sources[open[slot]];
    long turn = src.candidates[std::uniform_int_distribution<std::size_t>(0, src.candidates.size() - 1)(rng)];
    const auto& p = prepared[src.prepared];
    TrainExample e;
    e.dialogue_id = p.dialogue->id;
    e.position = turn;
    e.positive = false;
    e.context = context_through(p, p.turn_last_token.at(turn));
    res.examples.push_back(std::move(e));
    ++res.negatives;
    if (++src.used >= src.cap) {
      open[slot] = open.back();
      open.pop_back();
    }
  }
  if (res.negatives < wanted) {
    res.warnings.push_back("InsufficientNegatives: wanted " + std::to_string(wanted) + " negatives, produced " +
                           std::to_string(res.negatives));
  }
  std::shuffle(res.examples.begin(), res.examples.end(), rng);
  return res;
}

std::vector<TriggerLabel> build_trigger_labels(std::span<const Dialogue> corpus, const StreamConfig& cfg) {
  std::vector<TriggerLabel> out;
  for (const auto& d : corpus) {
    auto tokens = to_stream(d, cfg);
    std::vector<std::size_t> prefix_end;
    auto rendered = std::make_shared<const std::string>(render_stream(tokens, prefix_end));
    auto turns = token_turns(tokens);
    // Silence runs that end right where a whisper begins.
    std::vector<bool> positive(tokens.size(), false);
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      if (tokens[i].kind != StreamToken::Kind::WhisperWord || !tokens[i - 1].is_silence()) continue;
      for (std::size_t k = i; k > 0 && tokens[k - 1].is_silence(); --k) positive[k - 1] = true;
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!tokens[i].is_silence()) continue;
      TriggerLabel l;
      l.dialogue_id = d.id;
      l.token_index = i;
      l.turn = turns[i];
      l.label = positive[i] ? 1 : 0;
      l.rendered = rendered;
      l.context_length = prefix_end[i];
      out.push_back(std::move(l));
    }
  }
  return out;
}

void write_examples(const std::filesystem::path& path, std::span<const TrainExample> examples) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& e : examples) out << nlohmann::json(e).dump() << '\n';
}

std::vector<TrainExample> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::vector<TrainExample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) out.push_back(nlohmann::json::parse(line).get<TrainExample>());
  }
  return out;
}

void write_trigger_labels(const std::filesystem::path& path, std::span<const TriggerLabel> labels) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& l : labels) {
    out << nlohmann::json{{"dialogue_id", l.dialogue_id},
                          {"token_index", l.token_index},
                          {"turn", l.turn},
                          {"label", l.label},
                          {"context", l.context()}}
               .dump()
        << '\n';
  }
}

}  // namespace earshot
