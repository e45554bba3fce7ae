#include "earshot/chat_client.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include "earshot/error.hpp"
#include "httplib.h"

namespace earshot {

using Clock = std::chrono::steady_clock;

nlohmann::json to_request_json(const ChatRequest& req) {
  if (req.messages.empty()) throw Error(ErrorCode::InvalidArgument, "chat request needs at least one message");
  nlohmann::json j{{"model", req.model_name}, {"max_tokens", req.max_tokens}, {"temperature", req.temperature}};
  j["messages"] = nlohmann::json::array();
  for (const auto& m : req.messages) j["messages"].push_back({{"role", m.role}, {"content", m.content}});
  if (req.top_logprobs > 0) {
    j["logprobs"] = true;
    j["top_logprobs"] = req.top_logprobs;
  }
  return j;
}

ChatResponse parse_response_json(const nlohmann::json& body) {
  ChatResponse r;
  if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw Error(ErrorCode::JsonShape, "response has no choices[]");
  }
  const auto& choice = body["choices"][0];
  if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object()) {
    throw Error(ErrorCode::JsonShape, "choices[0] has no message object");
  }
  const auto& content = choice["message"].value("content", nlohmann::json(nullptr));
  if (content.is_string()) {
    r.content = content.get<std::string>();
  } else if (!content.is_null()) {
    throw Error(ErrorCode::JsonShape, "choices[0].message.content is not a string");
  }
  if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
    r.finish_reason = choice["finish_reason"].get<std::string>();
  }
  if (choice.contains("logprobs")) r.logprobs = choice["logprobs"];
  if (body.contains("usage") && body["usage"].is_object()) {
    r.usage.prompt_tokens = body["usage"].value("prompt_tokens", 0);
    r.usage.completion_tokens = body["usage"].value("completion_tokens", 0);
  }
  return r;
}

std::chrono::milliseconds RetryPolicy::backoff_for(int retry) const {
  double ms = static_cast<double>(initial_backoff.count());
  for (int i = 1; i < retry; ++i) ms *= multiplier;
  return std::min(max_backoff, std::chrono::milliseconds(static_cast<long long>(ms)));
}

HttpChatClient::HttpChatClient(HttpChatConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.endpoint.empty()) throw Error(ErrorCode::BadConfig, "chat endpoint is empty");
  if (cfg_.retry.max_attempts < 1) throw Error(ErrorCode::BadConfig, "max_attempts must be >= 1");
  if (cfg_.api_key.empty()) {
    if (const char* key = std::getenv("EARSHOT_API_KEY")) cfg_.api_key = key;
  }
  auto scheme_end = cfg_.endpoint.find("://");
  auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto slash = cfg_.endpoint.find('/', host_start);
  scheme_host_port_ = cfg_.endpoint.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : cfg_.endpoint.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  constexpr std::string_view kPath = "/v1/chat/completions";
  path_ = prefix.ends_with(kPath) ? prefix : prefix + std::string(kPath);
}

ChatResponse HttpChatClient::complete(const ChatRequest& req) {
  const auto body = to_request_json(req).dump();
  const auto deadline = Clock::now() + cfg_.deadline;
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  std::string last_failure;
  for (int attempt = 1;; ++attempt) {
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (remaining <= std::chrono::milliseconds(0)) {
      throw Error(ErrorCode::Timeout, "chat deadline exceeded after " + std::to_string(attempt - 1) +
                                          " attempt(s); last: " + last_failure);
    }
    httplib::Client cli(scheme_host_port_);
    cli.set_connection_timeout(remaining);
    cli.set_read_timeout(remaining);
    cli.set_write_timeout(remaining);
    auto res = cli.Post(path_, headers, body, "application/json");

    bool retryable = false;
    if (!res) {
      auto err = res.error();
      last_failure = "transport: " + httplib::to_string(err);
      if (Clock::now() >= deadline) throw Error(ErrorCode::Timeout, "chat request timed out (" + last_failure + ")");
      retryable = true;
      if (attempt >= cfg_.retry.max_attempts) {
        throw Error(err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout ? ErrorCode::Timeout
                                                                                             : ErrorCode::Io,
                    "chat request failed after " + std::to_string(attempt) + " attempt(s): " + last_failure);
      }
    } else if (res->status >= 200 && res->status < 300) {
      nlohmann::json parsed;
      try {
        parsed = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::parse_error&) {
        throw Error(ErrorCode::JsonShape, "chat response is not JSON: " + res->body.substr(0, 120));
      }
      auto out = parse_response_json(parsed);
      out.retry_count = attempt - 1;
      return out;
    } else {
      retryable = res->status == 429 || res->status >= 500;
      last_failure = "HTTP " + std::to_string(res->status);
      if (!retryable || attempt >= cfg_.retry.max_attempts) throw HttpStatusError(res->status, res->body);
    }

    auto wait = cfg_.retry.backoff_for(attempt);
    if (Clock::now() + wait >= deadline) {
      throw Error(ErrorCode::Timeout, "chat deadline leaves no room for retry; last: " + last_failure);
    }
    std::this_thread::sleep_for(wait);
  }
}

ScriptedChatClient::ScriptedChatClient(Handler handler) : handler_(std::move(handler)) {}

std::shared_ptr<ScriptedChatClient> ScriptedChatClient::sequence(std::vector<std::string> replies) {
  if (replies.empty()) throw Error(ErrorCode::InvalidArgument, "scripted sequence needs at least one reply");
  auto next = std::make_shared<std::size_t>(0);
  return std::make_shared<ScriptedChatClient>([replies = std::move(replies), next](const ChatRequest&) {
    auto i = std::min(*next, replies.size() - 1);
    ++*next;
    return replies[i];
  });
}

ChatResponse ScriptedChatClient::complete(const ChatRequest& req) {
  std::lock_guard lock(mu_);
  seen_.push_back(req);
  ChatResponse r;
  r.content = handler_(req);
  r.finish_reason = "stop";
  return r;
}

std::vector<ChatRequest> ScriptedChatClient::requests() const {
  std::lock_guard lock(mu_);
  return seen_;
}

}  // namespace earshot
