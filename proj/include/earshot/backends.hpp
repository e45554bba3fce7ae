#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "earshot/chat_client.hpp"
#include "earshot/dialogue.hpp"
#include "earshot/stream.hpp"
#include "json.hpp"

namespace earshot {

struct TriggerDecision {
  bool fire = false;
  double probability = 0.0;
  std::size_t at_token = 0;  // 0-based index of the silence token decided on
};

struct TriggerState {
  std::size_t tokens_observed = 0;
  bool last_is_silence = false;
  std::optional<TriggerDecision> last_decision;
};

// "When to respond". observe() is called once per stream token, including
// whisper tokens fed back by a history-aware session.
class TriggerBackend {
 public:
  explicit TriggerBackend(double threshold = 0.5);
  virtual ~TriggerBackend() = default;

  void observe(const StreamToken& t);
  // Throws NotAtSilence unless the last observed token is a Silence.
  TriggerDecision decide();

  const TriggerState& state() const { return state_; }
  double threshold() const { return threshold_; }
  void set_threshold(double t);
  // Assembled memory context; only remote backends read it.
  virtual void set_context(std::string) {}

 protected:
  virtual void on_observe(const StreamToken& t) = 0;
  // Probability in [0, 1] that the user needs help at the current silence.
  virtual double score() = 0;

 private:
  TriggerState state_;
  double threshold_;
};

struct WhisperResult {
  enum class Kind { Text, Veto };

  Kind kind = Kind::Veto;
  std::vector<std::string> words;
  std::vector<std::string> warnings;

  static WhisperResult text_of(std::vector<std::string> words);
  static WhisperResult veto();
  bool is_veto() const { return kind == Kind::Veto; }
  std::string text() const;
};

// Maps arbitrary model output onto Text(1-3 words) or Veto: end-of-sequence
// markers, "<no response>" and empty output veto; longer output is truncated.
WhisperResult normalize_whisper(std::string_view raw);

struct ResponderInput {
  const std::string* memory_context = nullptr;
  const std::deque<StreamToken>* window = nullptr;
  long turn = -1;
  std::size_t at_token = 0;
};

// "What to say". Keeps the trailing window of observed tokens.
class ResponderBackend {
 public:
  explicit ResponderBackend(std::size_t window = 512);
  virtual ~ResponderBackend() = default;

  void observe(const StreamToken& t);
  WhisperResult respond(const std::string& memory_context);

  const std::deque<StreamToken>& window() const { return window_; }
  std::size_t tokens_observed() const { return observed_; }
  long current_turn() const { return turn_; }

 protected:
  virtual WhisperResult generate(const ResponderInput& in) = 0;

 private:
  std::size_t capacity_;
  std::deque<StreamToken> window_;
  std::size_t observed_ = 0;
  long turn_ = -1;
};

// Scripted behaviour keyed by non-assistant turn index.
struct OracleScript {
  std::set<long> fire_at;
  std::map<long, std::optional<std::string>> responses;  // nullopt = veto
  // Optional word count per turn: the trigger waits until the turn's last word
  // so pauses inside an utterance are not mistaken for the turn boundary.
  std::map<long, std::size_t> turn_words;

  static OracleScript from_dialogue(const Dialogue& d);
};

void to_json(nlohmann::json& j, const OracleScript& s);
void from_json(const nlohmann::json& j, OracleScript& s);

class OracleTrigger : public TriggerBackend {
 public:
  explicit OracleTrigger(OracleScript script, double threshold = 0.5);

 protected:
  void on_observe(const StreamToken& t) override;
  double score() override;

 private:
  OracleScript script_;
  long turn_ = -1;
  std::size_t words_in_turn_ = 0;
  std::set<long> fired_;
};

class OracleResponder : public ResponderBackend {
 public:
  explicit OracleResponder(OracleScript script, std::size_t window = 512);

 protected:
  WhisperResult generate(const ResponderInput& in) override;

 private:
  OracleScript script_;
};

// Fires when a run of silences follows a question asked of the user. A
// whisper observed in the stream disarms it, which is what makes the
// history-aware configuration fire less often.
class QuestionTrigger : public TriggerBackend {
 public:
  explicit QuestionTrigger(double threshold = 0.5, std::size_t min_silences = 3);

  bool armed() const { return armed_; }
  std::size_t silence_run() const { return run_; }

 protected:
  void on_observe(const StreamToken& t) override;
  double score() override;

 private:
  std::size_t min_silences_;
  bool armed_ = false;
  std::size_t run_ = 0;
  SpeakerId speaker_ = SpeakerId::user();
};

// Answers with up to three memory words that overlap the recent conversation.
class KeywordResponder : public ResponderBackend {
 public:
  explicit KeywordResponder(std::size_t window = 512);

 protected:
  WhisperResult generate(const ResponderInput& in) override;
};

struct RemoteModelConfig {
  std::string model_name = "default";
  int max_tokens = 16;
  double temperature = 0.0;
};

// Yes/no classification through a chat endpoint; log probabilities of the first
// token give the probability, falling back to the literal answer.
class RemoteTrigger : public TriggerBackend {
 public:
  RemoteTrigger(std::shared_ptr<ChatClient> client, RemoteModelConfig cfg, double threshold = 0.5,
                std::size_t window = 512);

  void set_context(std::string ctx) override { context_ = std::move(ctx); }

 protected:
  void on_observe(const StreamToken& t) override;
  double score() override;

 private:
  std::shared_ptr<ChatClient> client_;
  RemoteModelConfig cfg_;
  std::size_t capacity_;
  std::deque<StreamToken> window_;
  std::string context_;
};

// Probability of "yes" from a chat response; exposed for tests.
double yes_probability(const ChatResponse& r);

class RemoteResponder : public ResponderBackend {
 public:
  RemoteResponder(std::shared_ptr<ChatClient> client, RemoteModelConfig cfg, std::size_t window = 512);

 protected:
  WhisperResult generate(const ResponderInput& in) override;

 private:
  std::shared_ptr<ChatClient> client_;
  RemoteModelConfig cfg_;
};

// Builds the responder's user message: the rendered window plus an instruction.
std::string responder_prompt(const std::deque<StreamToken>& window);

}  // namespace earshot
