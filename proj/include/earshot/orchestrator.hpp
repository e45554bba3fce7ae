#pragma once

#include <chrono>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "earshot/backends.hpp"
#include "earshot/dialogue.hpp"
#include "earshot/memory.hpp"
#include "earshot/stream.hpp"
#include "json.hpp"

namespace earshot {

struct SessionConfig {
  bool history_aware = true;
  double trigger_threshold = 0.5;
  Millis silence_unit{500};
  int suppression_turns = 0;
  bool manual_mode = false;
  std::size_t responder_window = 512;

  // Throws BadConfig.
  void validate() const;
};

void to_json(nlohmann::json& j, const SessionConfig& c);
// Missing keys keep their defaults; silence_unit is in seconds.
void from_json(const nlohmann::json& j, SessionConfig& c);

struct WhisperEvent {
  std::string text;             // empty when vetoed
  std::size_t at_token = 0;     // index into the input stream
  long at_turn = -1;            // non-assistant turn index
  double decision_latency = 0;  // seconds from trigger decision to responder result
  bool vetoed = false;
  bool manual = false;
  double emitted_at = 0;        // session clock, seconds

  bool operator==(const WhisperEvent&) const = default;
};

void to_json(nlohmann::json& j, const WhisperEvent& e);
void from_json(const nlohmann::json& j, WhisperEvent& e);

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Millis now() const = 0;
  virtual void sleep_until(Millis t) = 0;
  virtual bool is_virtual() const = 0;
};

// Monotonic wall clock measured from construction.
class SteadyClock : public Clock {
 public:
  SteadyClock();
  Millis now() const override;
  void sleep_until(Millis t) override;
  bool is_virtual() const override { return false; }

 private:
  std::chrono::steady_clock::time_point origin_;
};

// Time only moves when told to; makes traces reproducible.
class VirtualClock : public Clock {
 public:
  Millis now() const override { return now_; }
  void sleep_until(Millis t) override { now_ = std::max(now_, t); }
  bool is_virtual() const override { return true; }

 private:
  Millis now_{0};
};

enum class BackendKind { Oracle, Heuristic, Remote };
BackendKind backend_kind_from_string(std::string_view s);
std::string_view to_string(BackendKind k);

struct BackendSetup {
  BackendKind trigger = BackendKind::Heuristic;
  BackendKind responder = BackendKind::Heuristic;
  std::optional<OracleScript> script;   // required by oracle backends
  std::shared_ptr<ChatClient> client;   // required by remote backends
  RemoteModelConfig remote;
};

std::unique_ptr<TriggerBackend> make_trigger(const BackendSetup& b, const SessionConfig& c);
std::unique_ptr<ResponderBackend> make_responder(const BackendSetup& b, const SessionConfig& c);

// One live dual-model pipeline. Not thread-safe: a session is driven by a
// single event loop.
class Session {
 public:
  Session(std::unique_ptr<TriggerBackend> trigger, std::unique_ptr<ResponderBackend> responder, SessionConfig cfg,
          std::optional<Memory> memory = std::nullopt, std::shared_ptr<Clock> clock = nullptr);

  std::vector<WhisperEvent> push_token(const StreamToken& t);
  // Calls the responder at the current position, bypassing the trigger.
  // Throws NotManualMode unless manual_mode is set or force is true.
  WhisperEvent manual_trigger(bool force = false);

  void close() { closed_ = true; }
  bool closed() const { return closed_; }

  const SessionConfig& config() const { return cfg_; }
  // Takes effect from the next token. Throws BadConfig.
  void update_config(const SessionConfig& cfg);
  std::size_t tokens_pushed() const { return pushed_; }
  long current_turn() const { return turn_; }
  // Trigger fires, including the ones the responder vetoed.
  std::size_t fired_count() const { return fired_; }
  const std::vector<WhisperEvent>& events() const { return events_; }
  Clock& clock() { return *clock_; }
  const TriggerBackend& trigger() const { return *trigger_; }
  const ResponderBackend& responder() const { return *responder_; }

 private:
  WhisperEvent respond_now(Millis decided_at, bool manual);
  void feed(const StreamToken& t);
  void ensure_open() const;

  std::unique_ptr<TriggerBackend> trigger_;
  std::unique_ptr<ResponderBackend> responder_;
  SessionConfig cfg_;
  std::string responder_context_;
  std::shared_ptr<Clock> clock_;
  bool closed_ = false;
  std::size_t pushed_ = 0;
  long turn_ = -1;
  std::optional<long> last_whisper_turn_;
  std::size_t fired_ = 0;
  Millis last_offset_{0};
  std::vector<WhisperEvent> events_;
};

struct RunTrace {
  std::string dialogue_id;
  std::vector<WhisperEvent> events;
  std::set<long> predicted_turns;  // turns with a non-vetoed whisper
  double wall_time = 0;            // seconds
  std::size_t fired = 0;
  std::size_t tokens = 0;
  std::size_t decision_points = 0;  // non-assistant turns in the replayed dialogue
};

void to_json(nlohmann::json& j, const RunTrace& t);
void from_json(const nlohmann::json& j, RunTrace& t);

struct ReplayOptions {
  double speed = std::numeric_limits<double>::infinity();
  // Manual triggering after the last token of each listed turn.
  std::optional<std::set<long>> manual_turns;
  StreamConfig stream;
};

// Strips ground-truth whispers, streams the dialogue through the session and
// records what it emits. Pacing uses the session clock.
RunTrace replay(const Dialogue& d, Session& s, const ReplayOptions& opts = {});

}  // namespace earshot
