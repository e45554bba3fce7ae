#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace earshot {

// How often the single-large-model baseline has to run its decoder.
enum class SinglePolicy {
  // Without a trigger, the large model decodes a candidate response at every
  // decision point and discards it when no help is needed.
  DecodeEveryDecisionPoint,
  // The large model decodes only where a response is actually emitted.
  DecodeOnResponsesOnly,
};

std::string_view to_string(SinglePolicy p);
SinglePolicy single_policy_from_string(std::string_view s);

struct CostModel {
  double small_process_rate = 38.7;   // tokens/s
  double large_generate_rate = 14.2;  // tokens/s
  double large_process_rate = 14.2;   // tokens/s
  double response_frequency = 0.14;   // fired calls per decision point
  double avg_response_tokens = 3.0;
  double window_prefill = 0.0;        // tokens re-read by the responder per call
  double tokens_per_decision_point = 23.0;
  SinglePolicy single_policy = SinglePolicy::DecodeEveryDecisionPoint;

  // Throws InvalidArgument.
  void validate() const;
};

struct CostReport {
  double stream_length = 0;
  double decision_points = 0;
  double fired_calls = 0;
  double single_decodes = 0;
  double dual_seconds = 0;
  double single_seconds = 0;
  double reduction = 0;  // 1 - dual / single
};

CostReport simulate_cost(double stream_length, const CostModel& m);

struct CostSweepRow {
  double response_frequency;
  double window_prefill;
  SinglePolicy policy;
  CostReport report;
};

std::vector<CostSweepRow> cost_sweep(double stream_length, const CostModel& base,
                                     const std::vector<double>& frequencies, const std::vector<double>& prefills);
std::string format_sweep(const std::vector<CostSweepRow>& rows);

void to_json(nlohmann::json& j, const CostReport& r);
void to_json(nlohmann::json& j, const CostModel& m);

}  // namespace earshot
