#pragma once

#include <stdexcept>
#include <string>

namespace cnpe {

/// Machine-checkable failure categories surfaced by the engine.
enum class errc {
  io_failure,
  parse_failure,
  duplicate_id,
  unknown_id,
  missing_id,
  conflicting_label,
  provider_failure,
  dimension_mismatch,
  connectivity_unreachable,
  budget_infeasible,
  coverage_infeasible,
  missing_score,
  missing_field,
  unparseable_judgment,
  comparator_failure,
  tied_scores,
  empty_group,
  index_out_of_range,
  length_mismatch,
  single_class_truth,
  empty_relevant,
  invalid_argument,
  missing_artifact,
  config_error,
  stage_failure,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::io_failure: return "io-failure";
    case errc::parse_failure: return "parse-failure";
    case errc::duplicate_id: return "duplicate-id";
    case errc::unknown_id: return "unknown-id";
    case errc::missing_id: return "missing-id";
    case errc::conflicting_label: return "conflicting-label";
    case errc::provider_failure: return "provider-failure";
    case errc::dimension_mismatch: return "dimension-mismatch";
    case errc::connectivity_unreachable: return "connectivity-unreachable";
    case errc::budget_infeasible: return "budget-infeasible";
    case errc::coverage_infeasible: return "coverage-infeasible";
    case errc::missing_score: return "missing-score";
    case errc::missing_field: return "missing-field";
    case errc::unparseable_judgment: return "unparseable-judgment";
    case errc::comparator_failure: return "comparator-failure";
    case errc::tied_scores: return "tied-scores";
    case errc::empty_group: return "empty-group";
    case errc::index_out_of_range: return "index-out-of-range";
    case errc::length_mismatch: return "length-mismatch";
    case errc::single_class_truth: return "single-class-truth";
    case errc::empty_relevant: return "empty-relevant";
    case errc::invalid_argument: return "invalid-argument";
    case errc::missing_artifact: return "missing-artifact";
    case errc::config_error: return "config-error";
    case errc::stage_failure: return "stage-failure";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

}  // namespace cnpe
