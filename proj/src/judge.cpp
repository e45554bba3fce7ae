#include "earshot/judge.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <thread>

#include "earshot/assets.hpp"
#include "earshot/error.hpp"
#include "earshot/text.hpp"

namespace earshot {

std::optional<double> PrincipleScores::mean(Principle p) const {
  if (responses.empty()) return std::nullopt;
  const auto idx = static_cast<std::size_t>(p);
  double sum = 0;
  for (const auto& r : responses) sum += r.ratings[idx].rating;
  return sum / static_cast<double>(responses.size());
}

void to_json(nlohmann::json& j, const RubricScore& s) {
  j = nlohmann::json{{"whisper", s.whisper},
                     {"rating", s.rating},
                     {"relevancy", s.relevancy},
                     {"timeliness", s.timeliness},
                     {"explanation", s.explanation}};
}

void to_json(nlohmann::json& j, const PrincipleScores& s) {
  nlohmann::json responses = nlohmann::json::array();
  for (const auto& r : s.responses) {
    nlohmann::json ratings = nlohmann::json::object();
    for (auto p : kAllPrinciples) ratings[std::string(to_string(p))] = r.ratings[static_cast<std::size_t>(p)].rating;
    responses.push_back({{"whisper", r.whisper}, {"ratings", ratings}, {"preferred_option", r.preferred_option}});
  }
  j = nlohmann::json{{"responses", responses},
                     {"overall", {{"Valuable", s.overall_valuable.rating},
                                  {"Rarity of Interventions", s.overall_rarity.rating}}}};
}

std::string render_for_judge(const Dialogue& d, const StreamConfig& cfg) {
  auto tokens = to_stream(d, cfg);
  return render_stream(tokens);
}

std::string render_judge_prompt(std::string_view prompt_asset, const Dialogue& d, const StreamConfig& cfg) {
  char secs[32];
  std::snprintf(secs, sizeof secs, "%g", to_seconds(cfg.silence_unit));
  std::string prompt = text::replace_all(std::string(text::trim(prompt_asset)), "{{SILENCE_SECONDS}}", secs);
  return prompt + "\n\n" + render_for_judge(d, cfg);
}

namespace {

[[noreturn]] void shape(const std::string& what) { throw Error(ErrorCode::JudgeJsonShape, what); }

// Drops trailing commas and inserts commas missing between adjacent members.
std::string repair_json(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      out += c;
      if (c == '\\' && i + 1 < s.size()) {
        out += s[++i];
      } else if (c == '"') {
        in_str = false;
      }
      continue;
    }
    if (c == '}' || c == ']') {
      auto last = out.find_last_not_of(" \t\r\n");
      if (last != std::string::npos && out[last] == ',') out.erase(last, 1);
    } else if (c == '"') {
      auto last = out.find_last_not_of(" \t\r\n");
      if (last != std::string::npos && last + 1 < out.size() &&
          (out[last] == '"' || out[last] == '}' || out[last] == ']' ||
           std::isdigit(static_cast<unsigned char>(out[last])))) {
        out.insert(last + 1, ",");
      }
      in_str = true;
    }
    out += c;
  }
  return out;
}

const nlohmann::json& member(const nlohmann::json& obj, std::string_view key, const std::string& where) {
  if (!obj.is_object()) shape(where + " is not an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (text::to_lower(it.key()) == text::to_lower(key)) return it.value();
  }
  shape(where + " lacks \"" + std::string(key) + "\"");
}

std::string string_member(const nlohmann::json& obj, std::string_view key, const std::string& where) {
  const auto& v = member(obj, key, where);
  if (!v.is_string()) shape(where + "." + std::string(key) + " is not a string");
  return v.get<std::string>();
}

int rating_of(const nlohmann::json& obj, const std::string& where) {
  const auto& v = member(obj, "rating", where);
  long r = 0;
  if (v.is_number_integer()) {
    r = v.get<long>();
  } else if (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long>(v.get<double>()))) {
    r = static_cast<long>(v.get<double>());
  } else if (v.is_string()) {
    auto s = text::trim(v.get<std::string>());
    if (s.size() != 1 || !std::isdigit(static_cast<unsigned char>(s[0]))) shape(where + ".rating is not an integer");
    r = s[0] - '0';
  } else {
    shape(where + ".rating is not an integer");
  }
  if (r < 1 || r > 5) shape(where + ".rating " + std::to_string(r) + " outside 1-5");
  return static_cast<int>(r);
}

const nlohmann::json& responses_array(const nlohmann::json& root, std::size_t expected) {
  const auto& arr = member(root, "Individual_response", "judge output");
  if (!arr.is_array()) shape("Individual_response is not an array");
  if (arr.size() != expected) {
    throw Error(ErrorCode::CountMismatch, "judge rated " + std::to_string(arr.size()) + " responses, dialogue has " +
                                              std::to_string(expected) + " whispers");
  }
  return arr;
}

std::string whisper_of(const nlohmann::json& entry) {
  auto it = entry.find("Agent");
  if (it == entry.end() || !it->is_string()) return {};
  return it->get<std::string>();
}

}  // namespace

nlohmann::json extract_judge_json(std::string_view raw) {
  auto open = raw.find('{');
  if (open == std::string_view::npos) shape("no JSON object in judge output");
  int depth = 0;
  bool in_str = false;
  std::size_t close = std::string_view::npos;
  for (std::size_t i = open; i < raw.size() && close == std::string_view::npos; ++i) {
    char c = raw[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
    } else if (c == '"') {
      in_str = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}' && --depth == 0) {
      close = i;
    }
  }
  if (close == std::string_view::npos) shape("unterminated JSON object in judge output");
  auto body = raw.substr(open, close - open + 1);
  auto parsed = nlohmann::json::parse(body, nullptr, false);
  if (parsed.is_discarded()) parsed = nlohmann::json::parse(repair_json(body), nullptr, false);
  if (parsed.is_discarded()) shape("judge output is not valid JSON");
  return parsed;
}

std::vector<RubricScore> parse_rubric(std::string_view raw, std::size_t expected_whispers) {
  auto root = extract_judge_json(raw);
  const auto& arr = responses_array(root, expected_whispers);
  std::vector<RubricScore> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string where = "Individual_response[" + std::to_string(i) + "]";
    const auto& eval = member(arr[i], "response_evaluation", where);
    RubricScore s;
    s.whisper = whisper_of(arr[i]);
    s.rating = rating_of(eval, where);
    s.relevancy = string_member(eval, "relevancy", where);
    s.timeliness = string_member(eval, "timeliness", where);
    s.explanation = string_member(eval, "explanation", where);
    out.push_back(std::move(s));
  }
  return out;
}

PrincipleScores parse_principles(std::string_view raw, std::size_t expected_whispers) {
  auto root = extract_judge_json(raw);
  const auto& arr = responses_array(root, expected_whispers);
  PrincipleScores out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string where = "Individual_response[" + std::to_string(i) + "]";
    const auto& eval = member(arr[i], "response_evaluation", where);
    ResponsePrinciples r;
    r.whisper = whisper_of(arr[i]);
    for (auto p : kAllPrinciples) {
      const auto name = std::string(to_string(p));
      const auto& block = member(eval, name, where);
      auto& slot = r.ratings[static_cast<std::size_t>(p)];
      slot.rating = rating_of(block, where + "." + name);
      if (auto it = block.find("explanation"); it != block.end() && it->is_string()) slot.explanation = *it;
    }
    const auto& nra = member(arr[i], "no_response_analysis", where);
    r.preferred_option = string_member(nra, "preferred_option", where + ".no_response_analysis");
    if (auto it = nra.find("reasoning"); it != nra.end() && it->is_string()) r.no_response_reasoning = *it;
    out.responses.push_back(std::move(r));
  }
  const auto& overall = member(member(root, "Overall_response", "judge output"), "response_evaluation",
                               "Overall_response");
  auto read_overall = [&](std::string_view key) {
    const auto& block = member(overall, key, "Overall_response.response_evaluation");
    PrincipleRating pr;
    pr.rating = rating_of(block, "Overall_response." + std::string(key));
    if (auto it = block.find("explanation"); it != block.end() && it->is_string()) pr.explanation = *it;
    return pr;
  };
  out.overall_valuable = read_overall("Valuable");
  out.overall_rarity = read_overall("Rarity of Interventions");
  return out;
}

namespace {

std::string ask(const std::string& prompt, ChatClient& client, const JudgeConfig& cfg) {
  ChatRequest req;
  req.model_name = cfg.model_name;
  req.max_tokens = cfg.max_tokens;
  req.messages = {{"user", prompt}};
  return client.complete(req).content;
}

}  // namespace

std::vector<RubricScore> judge_rubric(const Dialogue& d, ChatClient& client, const JudgeConfig& cfg) {
  auto raw = ask(render_judge_prompt(assets::judge_rubric_prompt, d, cfg.stream), client, cfg);
  return parse_rubric(raw, d.whisper_count());
}

PrincipleScores judge_principles(const Dialogue& d, ChatClient& client, const JudgeConfig& cfg) {
  auto raw = ask(render_judge_prompt(assets::judge_principles_prompt, d, cfg.stream), client, cfg);
  return parse_principles(raw, d.whisper_count());
}

std::vector<JudgedDialogue> judge_corpus(const std::vector<Dialogue>& corpus, ChatClient& client,
                                         const JudgeConfig& cfg, bool principles) {
  std::vector<JudgedDialogue> out(corpus.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < corpus.size(); i = next++) {
      auto& slot = out[i];
      slot.dialogue_id = corpus[i].id;
      try {
        slot.rubric = judge_rubric(corpus[i], client, cfg);
        if (principles) slot.principles = judge_principles(corpus[i], client, cfg);
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(cfg.max_concurrency, 1, std::max<std::size_t>(1, corpus.size()));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n; ++k) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return out;
}

void add_judge_scores(EvalReport& report, const std::vector<JudgedDialogue>& judged) {
  std::vector<double> rubric, valuable, rarity;
  std::array<std::vector<double>, 9> per_principle;
  for (const auto& j : judged) {
    if (!j.error.empty()) {
      report.warnings.push_back("judge failed for '" + j.dialogue_id + "': " + j.error);
      continue;
    }
    for (const auto& r : j.rubric) rubric.push_back(r.rating);
    if (!j.principles) continue;
    for (auto p : kAllPrinciples) {
      if (auto m = j.principles->mean(p)) per_principle[static_cast<std::size_t>(p)].push_back(*m);
    }
    valuable.push_back(j.principles->overall_valuable.rating);
    rarity.push_back(j.principles->overall_rarity.rating);
  }
  if (!rubric.empty()) report.rubric = mean_std(rubric);
  report.principles.clear();
  for (auto p : kAllPrinciples) {
    const auto& v = per_principle[static_cast<std::size_t>(p)];
    if (!v.empty()) report.principles.emplace_back(std::string(to_string(p)), mean_std(v));
  }
  if (!valuable.empty()) report.overall_valuable = mean_std(valuable);
  if (!rarity.empty()) report.overall_rarity = mean_std(rarity);
}

}  // namespace earshot
