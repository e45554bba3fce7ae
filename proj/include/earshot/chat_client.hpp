#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace earshot {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model_name;
  std::vector<ChatMessage> messages;
  int max_tokens = 256;
  double temperature = 0.0;
  // Ask for per-token log probabilities (used by the remote trigger).
  int top_logprobs = 0;
};

struct ChatUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResponse {
  std::string content;
  std::string finish_reason;
  ChatUsage usage;
  int retry_count = 0;
  // choices[0].logprobs when the server returned it; null otherwise.
  nlohmann::json logprobs;
};

nlohmann::json to_request_json(const ChatRequest& req);
// Throws JsonShape when choices[0].message is missing.
ChatResponse parse_response_json(const nlohmann::json& body);

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{4000};

  std::chrono::milliseconds backoff_for(int retry) const;  // retry is 1-based
};

struct HttpChatConfig {
  // Base URL, e.g. "http://localhost:8000"; "/v1/chat/completions" is appended.
  std::string endpoint;
  // Bearer token; defaults to $EARSHOT_API_KEY when empty.
  std::string api_key;
  std::chrono::milliseconds deadline{30000};
  RetryPolicy retry;
};

// OpenAI-compatible chat completions over HTTP(S). Retries 429, 5xx and
// connection failures; other statuses fail immediately.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpChatConfig cfg);
  ChatResponse complete(const ChatRequest& req) override;

  const HttpChatConfig& config() const { return cfg_; }

 private:
  HttpChatConfig cfg_;
  std::string scheme_host_port_;
  std::string path_;
};

// In-process client: returns whatever the handler produces and records every
// request. Used by fixtures and offline demos.
class ScriptedChatClient : public ChatClient {
 public:
  using Handler = std::function<std::string(const ChatRequest&)>;

  explicit ScriptedChatClient(Handler handler);
  // Replies with the given contents in order, cycling on the last one.
  static std::shared_ptr<ScriptedChatClient> sequence(std::vector<std::string> replies);

  ChatResponse complete(const ChatRequest& req) override;
  std::vector<ChatRequest> requests() const;

 private:
  Handler handler_;
  mutable std::mutex mu_;
  std::vector<ChatRequest> seen_;
};

}  // namespace earshot
