#include "earshot/cost_model.hpp"

#include <cstdio>

#include "earshot/error.hpp"
#include "earshot/text.hpp"

namespace earshot {

std::string_view to_string(SinglePolicy p) {
  return p == SinglePolicy::DecodeEveryDecisionPoint ? "decode-every-point" : "decode-on-responses";
}

SinglePolicy single_policy_from_string(std::string_view s) {
  auto l = text::to_lower(s);
  if (l == "decode-every-point") return SinglePolicy::DecodeEveryDecisionPoint;
  if (l == "decode-on-responses") return SinglePolicy::DecodeOnResponsesOnly;
  throw Error(ErrorCode::InvalidArgument, "unknown single-model policy '" + std::string(s) + "'");
}

void CostModel::validate() const {
  if (!(small_process_rate > 0 && large_generate_rate > 0 && large_process_rate > 0)) {
    throw Error(ErrorCode::InvalidArgument, "all token rates must be positive");
  }
  if (!(response_frequency >= 0 && response_frequency <= 1)) {
    throw Error(ErrorCode::InvalidArgument, "response_frequency must be in [0, 1]");
  }
  if (avg_response_tokens < 0 || window_prefill < 0) {
    throw Error(ErrorCode::InvalidArgument, "token counts must be non-negative");
  }
  if (!(tokens_per_decision_point > 0)) throw Error(ErrorCode::InvalidArgument, "tokens_per_decision_point must be positive");
}

CostReport simulate_cost(double stream_length, const CostModel& m) {
  m.validate();
  if (!(stream_length > 0)) throw Error(ErrorCode::InvalidArgument, "stream_length must be positive");
  CostReport r;
  r.stream_length = stream_length;
  r.decision_points = stream_length / m.tokens_per_decision_point;
  r.fired_calls = m.response_frequency * r.decision_points;
  r.single_decodes = m.single_policy == SinglePolicy::DecodeEveryDecisionPoint ? r.decision_points : r.fired_calls;

  const double per_call = m.window_prefill / m.large_process_rate + m.avg_response_tokens / m.large_generate_rate;
  r.dual_seconds = stream_length / m.small_process_rate + r.fired_calls * per_call;
  r.single_seconds = stream_length / m.large_process_rate + r.single_decodes * m.avg_response_tokens / m.large_generate_rate;
  r.reduction = 1.0 - r.dual_seconds / r.single_seconds;
  return r;
}

std::vector<CostSweepRow> cost_sweep(double stream_length, const CostModel& base,
                                     const std::vector<double>& frequencies, const std::vector<double>& prefills) {
  std::vector<CostSweepRow> rows;
  for (auto policy : {SinglePolicy::DecodeEveryDecisionPoint, SinglePolicy::DecodeOnResponsesOnly}) {
    for (double f : frequencies) {
      for (double p : prefills) {
        CostModel m = base;
        m.single_policy = policy;
        m.response_frequency = f;
        m.window_prefill = p;
        rows.push_back({f, p, policy, simulate_cost(stream_length, m)});
      }
    }
  }
  return rows;
}

std::string format_sweep(const std::vector<CostSweepRow>& rows) {
  std::string out = "policy                 freq  prefill   dual_s    single_s  reduction\n";
  char buf[160];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%-21s  %4.2f  %7.0f  %8.2f  %9.2f  %9.4f\n", std::string(to_string(row.policy)).c_str(),
                  row.response_frequency, row.window_prefill, row.report.dual_seconds, row.report.single_seconds,
                  row.report.reduction);
    out += buf;
  }
  return out;
}

void to_json(nlohmann::json& j, const CostReport& r) {
  j = nlohmann::json{{"stream_length", r.stream_length}, {"decision_points", r.decision_points},
                     {"fired_calls", r.fired_calls},     {"single_decodes", r.single_decodes},
                     {"dual_seconds", r.dual_seconds},   {"single_seconds", r.single_seconds},
                     {"reduction", r.reduction}};
}

void to_json(nlohmann::json& j, const CostModel& m) {
  j = nlohmann::json{{"small_process_rate", m.small_process_rate},
                     {"large_generate_rate", m.large_generate_rate},
                     {"large_process_rate", m.large_process_rate},
                     {"response_frequency", m.response_frequency},
                     {"avg_response_tokens", m.avg_response_tokens},
                     {"window_prefill", m.window_prefill},
                     {"tokens_per_decision_point", m.tokens_per_decision_point},
                     {"single_policy", to_string(m.single_policy)}};
}

}  // namespace earshot
