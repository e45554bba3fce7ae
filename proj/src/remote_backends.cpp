#include <algorithm>
#include <cmath>

#include "earshot/backends.hpp"
#include "earshot/error.hpp"
#include "earshot/text.hpp"

namespace earshot {

namespace {

constexpr std::string_view kTriggerQuestion =
    "Given the conversation so far, does the User need a whispered hint at this silence? Answer yes or no.";
constexpr std::string_view kResponderInstruction =
    "Whisper one to three words for the User, or output <no response> if no help is needed.";

std::string render_window(const std::deque<StreamToken>& window) {
  std::vector<StreamToken> v(window.begin(), window.end());
  return render_stream(v);
}

// Runs a chat call and maps transport failures onto backend error codes.
ChatResponse call(ChatClient& client, const ChatRequest& req) {
  try {
    return client.complete(req);
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::Timeout: throw Error(ErrorCode::BackendTimeout, e.what());
      case ErrorCode::JsonShape: throw Error(ErrorCode::BackendProtocol, e.what());
      default: throw;
    }
  }
}

std::optional<bool> yes_no(std::string_view token) {
  auto l = text::to_lower(text::trim(token));
  while (!l.empty() && !std::isalpha(static_cast<unsigned char>(l.back()))) l.pop_back();
  while (!l.empty() && !std::isalpha(static_cast<unsigned char>(l.front()))) l.erase(l.begin());
  if (l == "yes") return true;
  if (l == "no") return false;
  return std::nullopt;
}

}  // namespace

std::string responder_prompt(const std::deque<StreamToken>& window) {
  return render_window(window) + "\n\n" + std::string(kResponderInstruction);
}

double yes_probability(const ChatResponse& r) {
  // OpenAI shape: logprobs.content[0].top_logprobs[] {token, logprob}.
  if (r.logprobs.is_object() && r.logprobs.contains("content") && r.logprobs["content"].is_array() &&
      !r.logprobs["content"].empty()) {
    const auto& first = r.logprobs["content"][0];
    double yes = 0.0, no = 0.0;
    bool seen = false;
    auto consider = [&](const nlohmann::json& e) {
      if (!e.contains("token") || !e.contains("logprob")) return;
      auto ans = yes_no(e["token"].get<std::string>());
      if (!ans) return;
      double p = std::exp(e["logprob"].get<double>());
      (*ans ? yes : no) += p;
      seen = true;
    };
    if (first.contains("top_logprobs") && first["top_logprobs"].is_array()) {
      for (const auto& e : first["top_logprobs"]) consider(e);
    } else {
      consider(first);
    }
    if (seen && yes + no > 0.0) return yes / (yes + no);
  }
  auto words = text::split_words(r.content);
  if (words.empty()) throw Error(ErrorCode::BackendProtocol, "trigger model returned no answer");
  auto ans = yes_no(words.front());
  if (!ans) throw Error(ErrorCode::BackendProtocol, "trigger model answered '" + words.front() + "', expected yes/no");
  return *ans ? 1.0 : 0.0;
}

RemoteTrigger::RemoteTrigger(std::shared_ptr<ChatClient> client, RemoteModelConfig cfg, double threshold,
                             std::size_t window)
    : TriggerBackend(threshold), client_(std::move(client)), cfg_(std::move(cfg)), capacity_(window) {
  if (!client_) throw Error(ErrorCode::BadConfig, "remote trigger needs a chat client");
}

void RemoteTrigger::on_observe(const StreamToken& t) {
  window_.push_back(t);
  if (window_.size() > capacity_) window_.pop_front();
}

double RemoteTrigger::score() {
  ChatRequest req;
  req.model_name = cfg_.model_name;
  req.max_tokens = 1;
  req.temperature = 0.0;
  req.top_logprobs = 5;
  req.messages = {{"system", context_}, {"user", render_window(window_) + "\n\n" + std::string(kTriggerQuestion)}};
  return yes_probability(call(*client_, req));
}

RemoteResponder::RemoteResponder(std::shared_ptr<ChatClient> client, RemoteModelConfig cfg, std::size_t window)
    : ResponderBackend(window), client_(std::move(client)), cfg_(std::move(cfg)) {
  if (!client_) throw Error(ErrorCode::BadConfig, "remote responder needs a chat client");
}

WhisperResult RemoteResponder::generate(const ResponderInput& in) {
  ChatRequest req;
  req.model_name = cfg_.model_name;
  req.max_tokens = cfg_.max_tokens;
  req.temperature = cfg_.temperature;
  req.messages = {{"system", in.memory_context ? *in.memory_context : std::string{}},
                  {"user", responder_prompt(*in.window)}};
  return normalize_whisper(call(*client_, req).content);
}

}  // namespace earshot
