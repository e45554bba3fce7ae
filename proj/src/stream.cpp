#include "earshot/stream.hpp"

#include <algorithm>
#include <optional>

#include "earshot/error.hpp"

namespace earshot {

StreamToken StreamToken::speaker_change(SpeakerId who, Millis at) {
  StreamToken t;
  t.kind = Kind::SpeakerChange;
  t.speaker = who;
  t.wall_offset = at;
  return t;
}

StreamToken StreamToken::word(std::string w, Millis at) {
  StreamToken t;
  t.kind = Kind::Word;
  t.text = std::move(w);
  t.wall_offset = at;
  return t;
}

StreamToken StreamToken::silence(Millis at) {
  StreamToken t;
  t.kind = Kind::Silence;
  t.wall_offset = at;
  return t;
}

StreamToken StreamToken::whisper_word(std::string w, Millis at) {
  StreamToken t;
  t.kind = Kind::WhisperWord;
  t.speaker = SpeakerId::assistant();
  t.text = std::move(w);
  t.wall_offset = at;
  return t;
}

void StreamConfig::validate() const {
  if (silence_unit <= Millis(0)) throw Error(ErrorCode::InvalidArgument, "silence_unit must be positive");
  if (!(words_per_second > 0.0)) throw Error(ErrorCode::InvalidArgument, "words_per_second must be positive");
}

std::size_t silence_tokens_for(Millis gap, Millis unit) {
  if (gap <= Millis(0)) return 0;
  return static_cast<std::size_t>((gap.count() + unit.count() - 1) / unit.count());
}

namespace {

class Emitter {
 public:
  explicit Emitter(std::vector<StreamToken>& out) : out_(out) {}

  void push(StreamToken t) {
    t.wall_offset = std::max(t.wall_offset, last_);
    last_ = t.wall_offset;
    out_.push_back(std::move(t));
  }

  void silences(std::size_t n, Millis from, Millis unit) {
    for (std::size_t k = 1; k <= n; ++k) push(StreamToken::silence(from + unit * static_cast<long>(k)));
  }

 private:
  std::vector<StreamToken>& out_;
  Millis last_{0};
};

}  // namespace

std::vector<StreamToken> to_stream(const Dialogue& d, const StreamConfig& cfg) {
  cfg.validate();
  std::vector<StreamToken> out;
  Emitter emit(out);
  std::optional<Millis> prev_end;
  for (const auto& u : d.turns) {
    if (prev_end) emit.silences(silence_tokens_for(u.start - *prev_end, cfg.silence_unit), *prev_end, cfg.silence_unit);
    prev_end = u.end;

    const auto n = static_cast<long>(u.words.size());
    if (u.speaker.is_assistant()) {
      for (long i = 0; i < n; ++i) emit.push(StreamToken::whisper_word(u.words[i], u.start + u.duration() * (i + 1) / n));
      continue;
    }

    Millis paused{0};
    for (const auto& h : u.hesitations) paused += h.duration;
    const Millis speech = std::max(Millis(0), u.duration() - paused);

    emit.push(StreamToken::speaker_change(u.speaker, u.start));
    Millis hes_so_far{0};
    std::size_t h = 0;
    for (long i = 0; i <= n; ++i) {
      for (; h < u.hesitations.size() && u.hesitations[h].word_index == static_cast<std::size_t>(i); ++h) {
        Millis at = u.start + (n > 0 ? speech * i / n : Millis(0)) + hes_so_far;
        emit.silences(silence_tokens_for(u.hesitations[h].duration, cfg.silence_unit), at, cfg.silence_unit);
        hes_so_far += u.hesitations[h].duration;
      }
      if (i < n) emit.push(StreamToken::word(u.words[i], u.start + speech * (i + 1) / n + hes_so_far));
    }
  }
  return out;
}

Dialogue from_stream(std::span<const StreamToken> tokens, const StreamConfig& cfg) {
  cfg.validate();
  Dialogue d;
  const bool timed = std::any_of(tokens.begin(), tokens.end(), [](const StreamToken& t) { return t.wall_offset > Millis(0); });

  std::optional<Utterance> cur;
  std::optional<SpeakerId> last_human;
  Millis anchor{0};      // wall offset where the current utterance began
  Millis last_content{0};
  Millis prev_end{0};
  std::size_t pending = 0;
  bool any_turn = false;

  auto gap_start = [&]() {
    Millis start = (any_turn ? prev_end : Millis(0)) + cfg.silence_unit * static_cast<long>(pending);
    pending = 0;
    return start;
  };
  auto close = [&]() {
    if (!cur) return;
    Millis dur{0};
    if (timed) {
      dur = std::max(Millis(0), last_content - anchor);
    } else {
      dur = Millis(static_cast<long>(1000.0 * static_cast<double>(cur->words.size()) / cfg.words_per_second + 0.5));
      for (const auto& h : cur->hesitations) dur += h.duration;
    }
    cur->end = cur->start + dur;
    prev_end = cur->end;
    any_turn = true;
    d.turns.push_back(std::move(*cur));
    cur.reset();
  };
  auto open = [&](SpeakerId who, Millis anchor_at) {
    close();
    Utterance u;
    u.speaker = who;
    u.start = gap_start();
    cur = std::move(u);
    anchor = anchor_at;
  };

  Millis prev_offset{0};
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    switch (t.kind) {
      case StreamToken::Kind::SpeakerChange:
        if (t.speaker.is_assistant()) {
          open(SpeakerId::assistant(), t.wall_offset);
        } else {
          open(t.speaker, t.wall_offset);
          last_human = t.speaker;
        }
        break;
      case StreamToken::Kind::Silence:
        ++pending;
        break;
      case StreamToken::Kind::Word:
        if (!last_human) {
          throw Error(ErrorCode::OrphanWord, "word '" + t.text + "' at token " + std::to_string(i) +
                                                 " precedes every speaker change");
        }
        if (!cur || cur->speaker.is_assistant()) {
          open(*last_human, prev_offset);
        } else if (pending > 0) {
          cur->hesitations.push_back({cur->words.size(), cfg.silence_unit * static_cast<long>(pending)});
          pending = 0;
        }
        cur->words.push_back(t.text);
        last_content = t.wall_offset;
        break;
      case StreamToken::Kind::WhisperWord:
        if (!cur || !cur->speaker.is_assistant() || pending > 0) open(SpeakerId::assistant(), prev_offset);
        cur->words.push_back(t.text);
        last_content = t.wall_offset;
        break;
    }
    prev_offset = t.wall_offset;
  }
  close();
  return d;
}

std::string render_stream(std::span<const StreamToken> tokens, std::vector<std::size_t>& prefix_end) {
  std::string out;
  prefix_end.assign(tokens.size(), 0);
  auto append = [&](std::string_view piece) {
    if (!out.empty() && out.back() != '\n') out += ' ';
    out += piece;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const std::size_t first = i;
    switch (t.kind) {
      case StreamToken::Kind::SpeakerChange:
        if (!out.empty()) out += '\n';
        out += t.speaker.is_assistant() ? std::string("Agent") : t.speaker.name();
        out += ':';
        break;
      case StreamToken::Kind::Word:
        append(t.text);
        break;
      case StreamToken::Kind::Silence:
        append(kSilenceMarker);
        break;
      case StreamToken::Kind::WhisperWord: {
        std::string w = "(Agent: " + t.text;
        while (i + 1 < tokens.size() && tokens[i + 1].kind == StreamToken::Kind::WhisperWord) w += " " + tokens[++i].text;
        append(w + ")");
        break;
      }
    }
    for (std::size_t k = first; k <= i; ++k) prefix_end[k] = out.size();
  }
  return out;
}

std::string render_stream(std::span<const StreamToken> tokens) {
  std::vector<std::size_t> unused;
  return render_stream(tokens, unused);
}

std::vector<long> token_turns(std::span<const StreamToken> tokens) {
  std::vector<long> out;
  out.reserve(tokens.size());
  long turn = -1;
  for (const auto& t : tokens) {
    if (t.kind == StreamToken::Kind::SpeakerChange && !t.speaker.is_assistant()) ++turn;
    out.push_back(turn);
  }
  return out;
}

}  // namespace earshot
