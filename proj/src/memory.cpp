#include "earshot/memory.hpp"

#include <algorithm>
#include <fstream>

#include "earshot/assets.hpp"
#include "earshot/error.hpp"
#include "earshot/text.hpp"

namespace earshot {

EventRecord EventRecord::make(std::string id, std::string text) {
  EventRecord e;
  e.event_id = std::move(id);
  e.word_count = text::word_count(text);
  e.text = std::move(text);
  return e;
}

std::string_view to_string(MemorySource s) {
  switch (s) {
    case MemorySource::Keywords: return "keywords";
    case MemorySource::SodaContext: return "soda_context";
    case MemorySource::Perltqa: return "perltqa";
  }
  return "keywords";
}

MemorySource memory_source_from_string(std::string_view s) {
  auto l = text::to_lower(s);
  if (l == "keywords") return MemorySource::Keywords;
  if (l == "soda_context" || l == "soda") return MemorySource::SodaContext;
  if (l == "perltqa") return MemorySource::Perltqa;
  throw Error(ErrorCode::InvalidArgument, "unknown memory source '" + std::string(s) + "'");
}

std::vector<std::string> memory_warnings(const Memory& m) {
  std::vector<std::string> out;
  if (m.events.size() != 2) out.push_back("expected 2 events, found " + std::to_string(m.events.size()));
  for (const auto& e : m.events) {
    if (e.word_count != text::word_count(e.text)) out.push_back("event " + e.event_id + ": stale word_count");
  }
  return out;
}

std::string_view context_preamble(ContextRole role) {
  return text::trim(role == ContextRole::Trigger ? assets::trigger_context_preamble : assets::responder_context_preamble);
}

std::string assemble_context(const Memory& m, ContextRole role) {
  std::string out(context_preamble(role));
  out += "\n\n";
  out += text::trim(m.profile_text);
  for (const auto& e : m.events) {
    out += "\n\n";
    out += text::trim(e.text);
  }
  return out;
}

void to_json(nlohmann::json& j, const Memory& m) {
  j = nlohmann::json{{"memory_id", m.memory_id},
                     {"profile_text", m.profile_text},
                     {"source", to_string(m.source)},
                     {"events", nlohmann::json::array()}};
  for (const auto& e : m.events) {
    j["events"].push_back({{"event_id", e.event_id}, {"text", e.text}, {"word_count", e.word_count}});
  }
}

void from_json(const nlohmann::json& j, Memory& m) {
  m.memory_id = j.at("memory_id").get<std::string>();
  m.profile_text = j.at("profile_text").get<std::string>();
  m.source = memory_source_from_string(j.value("source", std::string("keywords")));
  m.events.clear();
  for (const auto& e : j.value("events", nlohmann::json::array())) {
    auto rec = EventRecord::make(e.value("event_id", "event_" + std::to_string(m.events.size() + 1)),
                                 e.at("text").get<std::string>());
    m.events.push_back(std::move(rec));
  }
}

namespace {

// Returns the heading kind (0 = memory, n = event n) and the remainder of the line.
std::optional<std::pair<int, std::string>> heading(std::string_view line) {
  auto s = text::replace_all(std::string(text::trim(line)), "**", "");
  std::string_view v = text::trim(s);
  auto colon = v.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  auto head = text::to_lower(text::trim(v.substr(0, colon)));
  std::string rest(text::trim(v.substr(colon + 1)));
  if (head == "memory" || head == "profile") return std::make_pair(0, rest);
  if (head.rfind("event", 0) == 0) {
    auto num = text::trim(std::string_view(head).substr(5));
    if (num.empty() || !std::all_of(num.begin(), num.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return std::nullopt;
    }
    return std::make_pair(std::stoi(std::string(num)), rest);
  }
  return std::nullopt;
}

}  // namespace

Memory parse_memory_text(std::string_view input, std::string memory_id, MemorySource source) {
  Memory m;
  m.memory_id = std::move(memory_id);
  m.source = source;
  std::vector<std::pair<int, std::string>> blocks;
  for (auto line : text::lines(input)) {
    if (auto h = heading(line)) {
      blocks.push_back(*h);
    } else if (!blocks.empty() && !text::trim(line).empty()) {
      auto& body = blocks.back().second;
      if (!body.empty()) body += ' ';
      body += text::trim(line);
    }
  }
  bool have_profile = false;
  for (auto& [kind, body] : blocks) {
    if (kind == 0) {
      m.profile_text = body;
      have_profile = true;
    } else {
      m.events.push_back(EventRecord::make("event_" + std::to_string(kind), body));
    }
  }
  if (!have_profile) throw Error(ErrorCode::InvalidArgument, "memory text has no 'Memory:' block");
  return m;
}

std::string render_memory_text(const Memory& m) {
  std::string out = "Memory: " + m.profile_text + "\n";
  for (std::size_t i = 0; i < m.events.size(); ++i) {
    out += "\nEvent " + std::to_string(i + 1) + ": " + m.events[i].text + "\n";
  }
  return out;
}

MemoryStore::MemoryStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  std::ifstream in(path_);
  if (!in) throw Error(ErrorCode::Io, "cannot read memory store " + path_.string());
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    auto m = nlohmann::json::parse(line).get<Memory>();
    auto it = std::find_if(records_.begin(), records_.end(), [&](const Memory& r) { return r.memory_id == m.memory_id; });
    if (it != records_.end()) *it = std::move(m);  // later lines win
    else records_.push_back(std::move(m));
  }
}

void MemoryStore::put(const Memory& m) {
  std::unique_lock lock(mu_);
  auto it = std::find_if(records_.begin(), records_.end(), [&](const Memory& r) { return r.memory_id == m.memory_id; });
  if (it != records_.end()) {
    if (*it == m) return;
    throw Error(ErrorCode::DuplicateId, "memory '" + m.memory_id + "' already stored with different content");
  }
  records_.push_back(m);
  append_line(m);
}

void MemoryStore::replace(const Memory& m) {
  std::unique_lock lock(mu_);
  auto it = std::find_if(records_.begin(), records_.end(), [&](const Memory& r) { return r.memory_id == m.memory_id; });
  if (it == records_.end()) {
    records_.push_back(m);
    append_line(m);
    return;
  }
  *it = m;
  rewrite();
}

std::optional<Memory> MemoryStore::find(std::string_view id) const {
  std::shared_lock lock(mu_);
  for (const auto& r : records_) {
    if (r.memory_id == id) return r;
  }
  return std::nullopt;
}

Memory MemoryStore::get(std::string_view id) const {
  auto m = find(id);
  if (!m) throw Error(ErrorCode::NotFound, "memory '" + std::string(id) + "' not found");
  return *m;
}

bool MemoryStore::contains(std::string_view id) const { return find(id).has_value(); }

std::vector<std::string> MemoryStore::list() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> ids;
  for (const auto& r : records_) ids.push_back(r.memory_id);
  return ids;
}

std::size_t MemoryStore::size() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

void MemoryStore::append_line(const Memory& m) const {
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error(ErrorCode::Io, "cannot write memory store " + path_.string());
  out << nlohmann::json(m).dump() << '\n';
}

void MemoryStore::rewrite() const {
  if (path_.empty()) return;
  auto tmp = path_;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write memory store " + tmp.string());
    for (const auto& r : records_) out << nlohmann::json(r).dump() << '\n';
  }
  std::filesystem::rename(tmp, path_);
}

}  // namespace earshot
