#include "earshot/service/session_manager.hpp"

#include <cmath>
#include <random>

#include "earshot/error.hpp"
#include "earshot/stream.hpp"
#include "earshot/text.hpp"

namespace earshot::service {

CreateRequest parse_create_request(const nlohmann::json& body) {
  CreateRequest req;
  if (body.is_null()) return req;
  if (!body.is_object()) throw Error(ErrorCode::BadConfig, "session request must be a JSON object");
  try {
    if (auto it = body.find("memory_id"); it != body.end() && !it->is_null()) req.memory_id = it->get<std::string>();
    if (auto it = body.find("config"); it != body.end() && !it->is_null()) from_json(*it, req.config);
    req.idle_silence = body.value("idle_silence", false);
    if (auto it = body.find("oracle_script"); it != body.end() && !it->is_null()) req.script = it->get<OracleScript>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadConfig, std::string("bad session request: ") + e.what());
  }
  req.config.validate();
  return req;
}

struct SessionManager::Live {
  std::string id;
  std::optional<std::string> memory_id;
  bool idle_silence = false;
  std::unique_ptr<Session> session;
  double words_per_second = 2.9;

  std::mutex in_mu;
  std::condition_variable in_cv;
  std::deque<std::string> inbox;
  bool busy = false;
  bool stop = false;

  std::mutex out_mu;
  std::uint64_t seq = 0;
  std::vector<std::pair<std::uint64_t, std::string>> log;
  std::map<std::uint64_t, Sink> sinks;
  std::uint64_t next_sink = 1;

  mutable std::mutex tr_mu;
  Dialogue transcript;
  Millis cursor{0};

  std::thread worker;
};

SessionManager::SessionManager(ServiceOptions opts) : opts_(std::move(opts)) {
  if (!opts_.memories) opts_.memories = std::make_shared<MemoryStore>();
  if (opts_.queue_capacity == 0) throw Error(ErrorCode::BadConfig, "queue_capacity must be positive");
}

SessionManager::~SessionManager() {
  std::map<std::string, std::shared_ptr<Live>> all;
  {
    std::lock_guard lk(mu_);
    all.swap(sessions_);
  }
  for (auto& [id, s] : all) {
    {
      std::lock_guard lk(s->in_mu);
      s->stop = true;
    }
    s->in_cv.notify_all();
    if (s->worker.joinable()) s->worker.join();
  }
}

std::string SessionManager::create(const CreateRequest& req) {
  req.config.validate();
  std::optional<Memory> memory;
  if (req.memory_id) {
    memory = opts_.memories->find(*req.memory_id);
    if (!memory) throw Error(ErrorCode::UnknownMemory, "no memory '" + *req.memory_id + "'");
  }
  BackendSetup setup = opts_.backends;
  if (req.script) setup.script = req.script;
  std::unique_ptr<TriggerBackend> trigger;
  std::unique_ptr<ResponderBackend> responder;
  try {
    trigger = make_trigger(setup, req.config);
    responder = make_responder(setup, req.config);
  } catch (const Error& e) {
    throw Error(ErrorCode::BadConfig, e.what());
  }

  auto live = std::make_shared<Live>();
  live->memory_id = req.memory_id;
  live->idle_silence = req.idle_silence;
  live->words_per_second = opts_.words_per_second;
  live->session = std::make_unique<Session>(std::move(trigger), std::move(responder), req.config, memory);
  {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lk(mu_);
    char buf[40];
    std::snprintf(buf, sizeof buf, "s%llu-%06llx", static_cast<unsigned long long>(next_id_++),
                  static_cast<unsigned long long>(rng() & 0xffffff));
    live->id = buf;
    sessions_[live->id] = live;
  }
  live->transcript.id = live->id;
  live->transcript.source = DialogueSource::Live;
  live->transcript.memory_id = req.memory_id;

  publish(*live, {{"type", "session_state"},
                  {"state", "open"},
                  {"memory_id", req.memory_id ? nlohmann::json(*req.memory_id) : nlohmann::json(nullptr)},
                  {"config", req.config}});
  live->worker = std::thread([this, raw = live.get()] { run(*raw); });
  return live->id;
}

std::shared_ptr<SessionManager::Live> SessionManager::find(const std::string& id) const {
  std::lock_guard lk(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
  return it->second;
}

void SessionManager::publish(Live& s, nlohmann::json frame) {
  std::lock_guard lk(s.out_mu);
  frame["v"] = kWireVersion;
  frame["session_id"] = s.id;
  frame["seq"] = ++s.seq;
  auto text = frame.dump();
  s.log.emplace_back(s.seq, text);
  for (auto& [token, sink] : s.sinks) sink(s.seq, text);
}

namespace {

nlohmann::json error_frame(ErrorCode code, const std::string& message) {
  return {{"type", "error"}, {"code", std::string(to_string(code))}, {"message", message}};
}

nlohmann::json event_frame(const WhisperEvent& e) {
  nlohmann::json f{{"type", e.vetoed ? "vetoed" : "whisper"},
                   {"at_turn", e.at_turn},
                   {"at_token", e.at_token},
                   {"latency_ms", std::llround(e.decision_latency * 1000.0)},
                   {"manual", e.manual}};
  if (!e.vetoed) f["text"] = e.text;
  return f;
}

}  // namespace

bool SessionManager::submit(const std::string& id, std::string raw) {
  auto s = find(id);
  {
    std::lock_guard lk(s->in_mu);
    if (s->stop) {
      publish(*s, error_frame(ErrorCode::SessionClosed, "session is closed"));
      return false;
    }
    if (s->inbox.size() >= opts_.queue_capacity) {
      publish(*s, error_frame(ErrorCode::Backpressure,
                              "inbound queue full (" + std::to_string(opts_.queue_capacity) + " frames); frame rejected"));
      return false;
    }
    s->inbox.push_back(std::move(raw));
  }
  s->in_cv.notify_all();
  return true;
}

void SessionManager::run(Live& s) {
  const Millis unit = s.session->config().silence_unit;
  std::unique_lock lk(s.in_mu);
  for (;;) {
    auto ready = [&] { return s.stop || !s.inbox.empty(); };
    bool injected = false;
    if (s.idle_silence) {
      if (!s.in_cv.wait_for(lk, unit, ready)) injected = true;
    } else {
      s.in_cv.wait(lk, ready);
    }
    if (s.stop && s.inbox.empty()) break;
    std::string raw;
    if (injected) {
      raw = nlohmann::json{{"type", "silence"}, {"duration_ms", unit.count()}}.dump();
    } else {
      raw = std::move(s.inbox.front());
      s.inbox.pop_front();
    }
    s.busy = true;
    lk.unlock();
    handle(s, raw, injected);
    lk.lock();
    s.busy = false;
    s.in_cv.notify_all();
  }
  s.busy = false;
  s.in_cv.notify_all();
}

void SessionManager::handle(Live& s, const std::string& raw, bool injected) {
  auto frame = nlohmann::json::parse(raw, nullptr, false);
  if (frame.is_discarded() || !frame.is_object() || !frame.contains("type") || !frame["type"].is_string()) {
    publish(s, error_frame(ErrorCode::BadFrame, "frame is not a JSON object with a string \"type\""));
    return;
  }
  const auto type = frame["type"].get<std::string>();
  Session& session = *s.session;
  std::vector<WhisperEvent> events;
  auto record_events = [&](const std::vector<WhisperEvent>& evs) {
    std::lock_guard lk(s.tr_mu);
    for (const auto& e : evs) {
      events.push_back(e);
      if (e.vetoed) continue;
      Utterance w;
      w.speaker = SpeakerId::assistant();
      w.words = text::split_words(e.text);
      w.start = w.end = s.cursor;
      s.transcript.turns.push_back(std::move(w));
    }
  };

  try {
    if (type == "utterance") {
      const auto speaker_name = frame.value("speaker", std::string("User"));
      auto speaker = SpeakerId::from_name(speaker_name);
      if (!speaker || speaker->is_assistant()) {
        throw Error(ErrorCode::BadFrame, "unknown speaker '" + speaker_name + "'");
      }
      if (!frame.contains("text") || !frame["text"].is_string()) throw Error(ErrorCode::BadFrame, "utterance needs text");
      auto words = text::split_words(frame["text"].get<std::string>());
      if (words.empty()) throw Error(ErrorCode::BadFrame, "utterance text is empty");
      Utterance u;
      {
        std::lock_guard lk(s.tr_mu);
        u.speaker = *speaker;
        u.words = words;
        u.start = s.cursor;
        u.end = u.start + from_seconds(static_cast<double>(words.size()) / s.words_per_second);
        s.cursor = u.end;
      }
      record_events(session.push_token(StreamToken::speaker_change(*speaker, u.start)));
      const auto n = static_cast<long>(words.size());
      for (long i = 0; i < n; ++i) {
        record_events(session.push_token(StreamToken::word(words[i], u.start + (u.end - u.start) * (i + 1) / n)));
      }
      {
        std::lock_guard lk(s.tr_mu);
        s.transcript.turns.push_back(u);
      }
      publish(s, {{"type", "utterance"},
                  {"speaker", speaker->name()},
                  {"text", text::join(words)},
                  {"at_turn", session.current_turn()}});
    } else if (type == "silence") {
      if (!frame.contains("duration_ms") || !frame["duration_ms"].is_number() || frame["duration_ms"].get<double>() < 0) {
        throw Error(ErrorCode::BadFrame, "silence needs a non-negative duration_ms");
      }
      const Millis total(std::llround(frame["duration_ms"].get<double>()));
      const Millis unit = session.config().silence_unit;
      const std::size_t n = silence_tokens_for(total, unit);
      Millis left = total;
      for (std::size_t k = 0; k < n; ++k) {
        Millis at;
        {
          std::lock_guard lk(s.tr_mu);
          s.cursor += std::min(unit, left);
          left -= std::min(unit, left);
          at = s.cursor;
        }
        record_events(session.push_token(StreamToken::silence(at)));
      }
      nlohmann::json echo{{"type", "silence"}, {"duration_ms", total.count()}, {"tokens", n}};
      if (injected) echo["injected"] = true;
      publish(s, echo);
    } else if (type == "manual_trigger") {
      record_events({session.manual_trigger(frame.value("force", false))});
      publish(s, {{"type", "manual_trigger"}, {"at_turn", session.current_turn()}});
    } else if (type == "config") {
      if (!frame.contains("config") || !frame["config"].is_object()) {
        throw Error(ErrorCode::BadFrame, "config frame needs a \"config\" object");
      }
      nlohmann::json merged = session.config();
      merged.update(frame["config"]);
      SessionConfig next = session.config();
      from_json(merged, next);
      if (next.silence_unit != session.config().silence_unit || next.responder_window != session.config().responder_window) {
        throw Error(ErrorCode::BadConfig, "silence_unit and responder_window are fixed for the session lifetime");
      }
      session.update_config(next);
      publish(s, {{"type", "session_state"}, {"state", "open"}, {"config", next}});
    } else if (type == "close") {
      session.close();
      {
        std::lock_guard lk(s.in_mu);
        s.stop = true;
      }
      publish(s, {{"type", "session_state"}, {"state", "closed"}});
    } else {
      throw Error(ErrorCode::BadFrame, "unknown frame type '" + type + "'");
    }
  } catch (const Error& e) {
    publish(s, error_frame(e.code(), e.what()));
  } catch (const std::exception& e) {
    publish(s, error_frame(ErrorCode::BadFrame, e.what()));
  }
  for (const auto& e : events) publish(s, event_frame(e));
}

std::uint64_t SessionManager::subscribe(const std::string& id, Sink sink, std::uint64_t after_seq) {
  auto s = find(id);
  std::lock_guard lk(s->out_mu);
  for (const auto& [seq, text] : s->log) {
    if (seq > after_seq) sink(seq, text);
  }
  auto token = s->next_sink++;
  s->sinks.emplace(token, std::move(sink));
  return token;
}

void SessionManager::unsubscribe(const std::string& id, std::uint64_t token) {
  std::shared_ptr<Live> s;
  try {
    s = find(id);
  } catch (const Error&) {
    return;
  }
  std::lock_guard lk(s->out_mu);
  s->sinks.erase(token);
}

Dialogue SessionManager::transcript(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lk(s->tr_mu);
  return s->transcript;
}

nlohmann::json SessionManager::state(const std::string& id) const {
  auto s = find(id);
  flush(id);
  std::lock_guard in(s->in_mu);
  std::lock_guard out(s->out_mu);
  const auto& session = *s->session;
  std::size_t whispers = 0;
  for (const auto& e : session.events()) whispers += e.vetoed ? 0 : 1;
  return {{"session_id", s->id},
          {"state", session.closed() ? "closed" : "open"},
          {"memory_id", s->memory_id ? nlohmann::json(*s->memory_id) : nlohmann::json(nullptr)},
          {"config", session.config()},
          {"idle_silence", s->idle_silence},
          {"tokens", session.tokens_pushed()},
          {"turn", session.current_turn()},
          {"fired", session.fired_count()},
          {"whispers", whispers},
          {"seq", s->seq},
          {"queued", s->inbox.size()}};
}

std::vector<nlohmann::json> SessionManager::frames(const std::string& id, std::uint64_t after_seq) const {
  auto s = find(id);
  std::lock_guard lk(s->out_mu);
  std::vector<nlohmann::json> out;
  for (const auto& [seq, text] : s->log) {
    if (seq > after_seq) out.push_back(nlohmann::json::parse(text));
  }
  return out;
}

void SessionManager::flush(const std::string& id) const {
  auto s = find(id);
  std::unique_lock lk(s->in_mu);
  s->in_cv.wait(lk, [&] { return s->inbox.empty() && !s->busy; });
}

void SessionManager::close(const std::string& id) {
  auto s = find(id);
  {
    std::lock_guard lk(s->in_mu);
    if (s->stop) return;
  }
  submit(id, R"({"type":"close"})");
  flush(id);
}

bool SessionManager::contains(const std::string& id) const {
  std::lock_guard lk(mu_);
  return sessions_.count(id) > 0;
}

std::vector<std::string> SessionManager::list() const {
  std::lock_guard lk(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

std::size_t SessionManager::size() const {
  std::lock_guard lk(mu_);
  return sessions_.size();
}

}  // namespace earshot::service
