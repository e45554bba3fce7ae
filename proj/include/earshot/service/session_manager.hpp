#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "earshot/dialogue.hpp"
#include "earshot/memory.hpp"
#include "earshot/orchestrator.hpp"
#include "json.hpp"

namespace earshot::service {

inline constexpr int kWireVersion = 1;

struct ServiceOptions {
  BackendSetup backends;  // oracle script here is the default for new sessions
  std::shared_ptr<MemoryStore> memories;
  std::size_t queue_capacity = 1024;
  double words_per_second = 2.9;  // transcript timeline for utterances
};

struct CreateRequest {
  std::optional<std::string> memory_id;
  SessionConfig config;
  // Inject one silence per elapsed silence_unit while no input arrives.
  bool idle_silence = false;
  std::optional<OracleScript> script;
};

// {"memory_id": ..., "config": {...}, "idle_silence": bool, "oracle_script": {...}}; throws BadConfig.
CreateRequest parse_create_request(const nlohmann::json& body);

// Owns live sessions. Each session has its own worker thread that drains an
// inbound frame queue and publishes outbound frames with a per-session seq.
class SessionManager {
 public:
  // Receives serialized outbound frames in seq order. Called from the session
  // worker (or the submitting thread for backpressure errors); must not block.
  using Sink = std::function<void(std::uint64_t seq, const std::string& frame)>;

  explicit SessionManager(ServiceOptions opts);
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  // Throws UnknownMemory or BadConfig.
  std::string create(const CreateRequest& req);

  // Queues one raw inbound frame. When the queue is full the frame is rejected
  // with a Backpressure error frame and false is returned.
  bool submit(const std::string& id, std::string raw);

  // Replays retained frames with seq > after_seq, then delivers live frames.
  std::uint64_t subscribe(const std::string& id, Sink sink, std::uint64_t after_seq = 0);
  void unsubscribe(const std::string& id, std::uint64_t token);

  Dialogue transcript(const std::string& id) const;
  nlohmann::json state(const std::string& id) const;
  std::vector<nlohmann::json> frames(const std::string& id, std::uint64_t after_seq = 0) const;
  // Waits until every queued inbound frame has been processed.
  void flush(const std::string& id) const;
  void close(const std::string& id);

  bool contains(const std::string& id) const;
  std::vector<std::string> list() const;
  std::size_t size() const;
  MemoryStore& memories() { return *opts_.memories; }
  const ServiceOptions& options() const { return opts_; }

 private:
  struct Live;
  std::shared_ptr<Live> find(const std::string& id) const;
  void run(Live& s);
  void handle(Live& s, const std::string& raw, bool injected);
  static void publish(Live& s, nlohmann::json frame);

  ServiceOptions opts_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Live>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace earshot::service
