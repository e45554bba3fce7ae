#pragma once

#include <string_view>

// Text assets compiled in from assets/ (see cmake/EmbedAssets.cmake).
namespace earshot::assets {

extern const std::string_view memory_generation_prompt;
extern const std::string_view dialogue_system_prompt;
extern const std::string_view dialogue_user_prompt;
extern const std::string_view judge_rubric_prompt;
extern const std::string_view judge_principles_prompt;
extern const std::string_view trigger_context_preamble;
extern const std::string_view responder_context_preamble;
extern const std::string_view keyword_list;
extern const std::string_view homophone_lexicon;
extern const std::string_view wire_frame_schema;
extern const std::string_view standin_perltqa;
extern const std::string_view standin_soda;

}  // namespace earshot::assets
