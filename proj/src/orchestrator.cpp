#include "earshot/orchestrator.hpp"

#include <cmath>
#include <thread>

#include "earshot/error.hpp"
#include "earshot/text.hpp"

namespace earshot {

void SessionConfig::validate() const {
  if (!(trigger_threshold >= 0.0 && trigger_threshold <= 1.0)) {
    throw Error(ErrorCode::BadConfig, "trigger_threshold must be in [0, 1]");
  }
  if (silence_unit <= Millis(0)) throw Error(ErrorCode::BadConfig, "silence_unit must be positive");
  if (suppression_turns < 0) throw Error(ErrorCode::BadConfig, "suppression_turns must be >= 0");
  if (responder_window == 0) throw Error(ErrorCode::BadConfig, "responder_window must be positive");
}

void to_json(nlohmann::json& j, const SessionConfig& c) {
  j = nlohmann::json{{"history_aware", c.history_aware},
                     {"trigger_threshold", c.trigger_threshold},
                     {"silence_unit", to_seconds(c.silence_unit)},
                     {"suppression_turns", c.suppression_turns},
                     {"manual_mode", c.manual_mode},
                     {"responder_window", c.responder_window}};
}

void from_json(const nlohmann::json& j, SessionConfig& c) {
  if (!j.is_object()) throw Error(ErrorCode::BadConfig, "session config must be a JSON object");
  try {
    c.history_aware = j.value("history_aware", c.history_aware);
    c.trigger_threshold = j.value("trigger_threshold", c.trigger_threshold);
    if (j.contains("silence_unit")) c.silence_unit = from_seconds(j["silence_unit"].get<double>());
    c.suppression_turns = j.value("suppression_turns", c.suppression_turns);
    c.manual_mode = j.value("manual_mode", c.manual_mode);
    c.responder_window = j.value("responder_window", c.responder_window);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadConfig, std::string("bad session config: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const WhisperEvent& e) {
  j = nlohmann::json{{"text", e.text},         {"at_turn", e.at_turn}, {"at_token", e.at_token},
                     {"decision_latency", e.decision_latency}, {"vetoed", e.vetoed},   {"emitted_at", e.emitted_at}};
  if (e.manual) j["manual"] = true;
}

void from_json(const nlohmann::json& j, WhisperEvent& e) {
  e.text = j.value("text", std::string{});
  e.at_turn = j.at("at_turn").get<long>();
  e.at_token = j.at("at_token").get<std::size_t>();
  e.decision_latency = j.value("decision_latency", 0.0);
  e.vetoed = j.value("vetoed", false);
  e.manual = j.value("manual", false);
  e.emitted_at = j.value("emitted_at", 0.0);
}

SteadyClock::SteadyClock() : origin_(std::chrono::steady_clock::now()) {}

Millis SteadyClock::now() const {
  return std::chrono::duration_cast<Millis>(std::chrono::steady_clock::now() - origin_);
}

void SteadyClock::sleep_until(Millis t) { std::this_thread::sleep_until(origin_ + t); }

BackendKind backend_kind_from_string(std::string_view s) {
  auto l = text::to_lower(s);
  if (l == "oracle") return BackendKind::Oracle;
  if (l == "heuristic") return BackendKind::Heuristic;
  if (l == "remote") return BackendKind::Remote;
  throw Error(ErrorCode::BadConfig, "unknown backend '" + std::string(s) + "' (oracle|heuristic|remote)");
}

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Oracle: return "oracle";
    case BackendKind::Heuristic: return "heuristic";
    case BackendKind::Remote: return "remote";
  }
  return "heuristic";
}

std::unique_ptr<TriggerBackend> make_trigger(const BackendSetup& b, const SessionConfig& c) {
  switch (b.trigger) {
    case BackendKind::Oracle:
      if (!b.script) throw Error(ErrorCode::BadConfig, "oracle trigger needs a script");
      return std::make_unique<OracleTrigger>(*b.script, c.trigger_threshold);
    case BackendKind::Heuristic:
      return std::make_unique<QuestionTrigger>(c.trigger_threshold);
    case BackendKind::Remote:
      if (!b.client) throw Error(ErrorCode::BadConfig, "remote trigger needs an endpoint");
      return std::make_unique<RemoteTrigger>(b.client, b.remote, c.trigger_threshold, c.responder_window);
  }
  throw Error(ErrorCode::BadConfig, "unknown trigger backend");
}

std::unique_ptr<ResponderBackend> make_responder(const BackendSetup& b, const SessionConfig& c) {
  switch (b.responder) {
    case BackendKind::Oracle:
      if (!b.script) throw Error(ErrorCode::BadConfig, "oracle responder needs a script");
      return std::make_unique<OracleResponder>(*b.script, c.responder_window);
    case BackendKind::Heuristic:
      return std::make_unique<KeywordResponder>(c.responder_window);
    case BackendKind::Remote:
      if (!b.client) throw Error(ErrorCode::BadConfig, "remote responder needs an endpoint");
      return std::make_unique<RemoteResponder>(b.client, b.remote, c.responder_window);
  }
  throw Error(ErrorCode::BadConfig, "unknown responder backend");
}

Session::Session(std::unique_ptr<TriggerBackend> trigger, std::unique_ptr<ResponderBackend> responder,
                 SessionConfig cfg, std::optional<Memory> memory, std::shared_ptr<Clock> clock)
    : trigger_(std::move(trigger)), responder_(std::move(responder)), cfg_(cfg), clock_(std::move(clock)) {
  cfg_.validate();
  if (!trigger_ || !responder_) throw Error(ErrorCode::BadConfig, "session needs both backends");
  if (!clock_) clock_ = std::make_shared<SteadyClock>();
  trigger_->set_threshold(cfg_.trigger_threshold);
  Memory m = memory.value_or(Memory{});
  trigger_->set_context(assemble_context(m, ContextRole::Trigger));
  responder_context_ = assemble_context(m, ContextRole::Responder);
}

void Session::update_config(const SessionConfig& cfg) {
  cfg.validate();
  trigger_->set_threshold(cfg.trigger_threshold);
  cfg_ = cfg;
}

void Session::ensure_open() const {
  if (closed_) throw Error(ErrorCode::SessionClosed, "session is closed");
}

void Session::feed(const StreamToken& t) {
  trigger_->observe(t);
  responder_->observe(t);
}

namespace {
[[noreturn]] void rethrow_at(const Error& e, std::size_t token, long turn) {
  throw Error(e.code(), "at token " + std::to_string(token) + " (turn " + std::to_string(turn) + "): " + e.what());
}
}  // namespace

std::vector<WhisperEvent> Session::push_token(const StreamToken& t) {
  ensure_open();
  ++pushed_;
  if (t.kind == StreamToken::Kind::SpeakerChange && !t.speaker.is_assistant()) ++turn_;
  last_offset_ = std::max(last_offset_, t.wall_offset);
  feed(t);

  if (!t.is_silence() || cfg_.manual_mode || turn_ < 0) return {};
  if (last_whisper_turn_ && turn_ - *last_whisper_turn_ < cfg_.suppression_turns) return {};

  const Millis decided_at = clock_->now();
  TriggerDecision d;
  try {
    d = trigger_->decide();
  } catch (const Error& e) {
    rethrow_at(e, pushed_ - 1, turn_);
  }
  if (!d.fire) return {};
  ++fired_;
  return {respond_now(decided_at, false)};
}

WhisperEvent Session::manual_trigger(bool force) {
  ensure_open();
  if (!cfg_.manual_mode && !force) throw Error(ErrorCode::NotManualMode, "session is not in manual mode");
  return respond_now(clock_->now(), true);
}

WhisperEvent Session::respond_now(Millis decided_at, bool manual) {
  WhisperEvent ev;
  ev.manual = manual;
  ev.at_turn = turn_;
  ev.at_token = pushed_ == 0 ? 0 : pushed_ - 1;
  WhisperResult r;
  try {
    r = responder_->respond(responder_context_);
  } catch (const Error& e) {
    rethrow_at(e, ev.at_token, turn_);
  }
  const Millis done = clock_->now();
  ev.decision_latency = to_seconds(done - decided_at);
  ev.emitted_at = to_seconds(done);
  if (r.is_veto()) {
    ev.vetoed = true;
  } else {
    ev.text = r.text();
    last_whisper_turn_ = turn_;
    if (cfg_.history_aware) {
      for (const auto& w : r.words) feed(StreamToken::whisper_word(w, last_offset_));
    }
  }
  events_.push_back(ev);
  return ev;
}

void to_json(nlohmann::json& j, const RunTrace& t) {
  j = nlohmann::json{{"dialogue_id", t.dialogue_id},
                     {"events", t.events},
                     {"predicted_turns", t.predicted_turns},
                     {"wall_time", t.wall_time},
                     {"fired", t.fired},
                     {"tokens", t.tokens},
                     {"decision_points", t.decision_points}};
}

void from_json(const nlohmann::json& j, RunTrace& t) {
  t.dialogue_id = j.value("dialogue_id", std::string{});
  t.events = j.at("events").get<std::vector<WhisperEvent>>();
  t.predicted_turns.clear();
  for (const auto& v : j.at("predicted_turns")) t.predicted_turns.insert(v.get<long>());
  t.wall_time = j.value("wall_time", 0.0);
  t.fired = j.value("fired", std::size_t{0});
  t.tokens = j.value("tokens", std::size_t{0});
  t.decision_points = j.value("decision_points", std::size_t{0});
}

RunTrace replay(const Dialogue& d, Session& s, const ReplayOptions& opts) {
  if (!(opts.speed > 0.0)) throw Error(ErrorCode::InvalidArgument, "replay speed must be positive");
  RunTrace trace;
  trace.dialogue_id = d.id;
  const Dialogue heard = strip_whispers(d);
  const auto tokens = to_stream(heard, opts.stream);
  const auto turns = token_turns(tokens);
  trace.decision_points = heard.turns.size();
  trace.tokens = tokens.size();

  Clock& clock = s.clock();
  const bool paced = std::isfinite(opts.speed);
  const Millis start = clock.now();
  const std::size_t fired_before = s.fired_count();

  auto starts_turn = [&](std::size_t i) {
    return tokens[i].kind == StreamToken::Kind::SpeakerChange && !tokens[i].speaker.is_assistant();
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (paced) {
      clock.sleep_until(start + Millis(std::llround(static_cast<double>(tokens[i].wall_offset.count()) / opts.speed)));
    } else if (clock.is_virtual()) {
      clock.sleep_until(start + tokens[i].wall_offset);
    }
    for (auto& ev : s.push_token(tokens[i])) trace.events.push_back(std::move(ev));
    bool turn_ends = i + 1 == tokens.size() || starts_turn(i + 1);
    if (opts.manual_turns && turn_ends && opts.manual_turns->count(turns[i])) {
      trace.events.push_back(s.manual_trigger(true));
    }
  }
  trace.wall_time = to_seconds(clock.now() - start);
  trace.fired = s.fired_count() - fired_before;
  for (const auto& ev : trace.events) {
    if (!ev.vetoed) trace.predicted_turns.insert(ev.at_turn);
  }
  return trace;
}

}  // namespace earshot
