#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace earshot {

struct EventRecord {
  std::string event_id;
  std::string text;
  std::size_t word_count = 0;

  static EventRecord make(std::string id, std::string text);
  bool operator==(const EventRecord&) const = default;
};

enum class MemorySource { Keywords, SodaContext, Perltqa };

std::string_view to_string(MemorySource s);
MemorySource memory_source_from_string(std::string_view s);

struct Memory {
  std::string memory_id;
  std::string profile_text;
  std::vector<EventRecord> events;
  MemorySource source = MemorySource::Keywords;

  bool operator==(const Memory&) const = default;
};

// Non-fatal findings: word_count drift, event count other than two.
std::vector<std::string> memory_warnings(const Memory& m);

enum class ContextRole { Trigger, Responder };

// Bumped whenever the template below changes, so ablation runs stay comparable.
inline constexpr std::string_view kContextTemplateVersion = "ctx-v1";

// Role preamble, profile, then each event, separated by blank lines.
std::string assemble_context(const Memory& m, ContextRole role);
std::string_view context_preamble(ContextRole role);

void to_json(nlohmann::json& j, const Memory& m);
void from_json(const nlohmann::json& j, Memory& m);

// "Memory: ...", "Event 1: ...", "Event 2: ..." blocks (bold markers tolerated).
Memory parse_memory_text(std::string_view text, std::string memory_id,
                         MemorySource source = MemorySource::Keywords);
std::string render_memory_text(const Memory& m);

// JSONL-backed store keyed by memory_id. An empty path keeps records in memory.
// Writes are serialized; reads may run concurrently.
class MemoryStore {
 public:
  explicit MemoryStore(std::filesystem::path path = {});

  // Re-putting an identical record is a no-op; differing content is DuplicateId.
  void put(const Memory& m);
  // Insert or overwrite (REST PUT semantics); rewrites the backing file.
  void replace(const Memory& m);
  Memory get(std::string_view id) const;
  std::optional<Memory> find(std::string_view id) const;
  bool contains(std::string_view id) const;
  std::vector<std::string> list() const;
  std::size_t size() const;

 private:
  void append_line(const Memory& m) const;
  void rewrite() const;

  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::vector<Memory> records_;  // insertion order
};

}  // namespace earshot
