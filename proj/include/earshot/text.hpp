#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace earshot::text {

std::vector<std::string> split_words(std::string_view s);
std::string join(const std::vector<std::string>& words, std::string_view sep = " ");
std::size_t word_count(std::string_view s);

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);

// Splits on '\n', dropping a trailing '\r' from each line.
std::vector<std::string_view> lines(std::string_view s);

// Non-empty, non-'#' lines of a bundled asset.
std::vector<std::string> asset_lines(std::string_view asset);

std::string replace_all(std::string s, std::string_view from, std::string_view to);

}  // namespace earshot::text
