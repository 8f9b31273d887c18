#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace regulus {

// Every failure the library reports deliberately, one code per contract
// violation. Callers catch regulus::Error and branch on code().
enum class Errc {
  // ledger
  invalid_signature,
  duplicate_record,
  malformed_payload,
  empty_pool,
  empty_leaves,
  unknown_record,
  not_yet_sealed,
  // arbitration
  duplicate_agent,
  insufficient_stake,
  unknown_agent,
  suspended_agent,
  wrong_epoch,
  epoch_already_closed,
  unknown_evidence,
  dispute_not_open,
  evidence_proof_invalid,
  dispute_not_evaluated,
  // reputation
  weights_not_normalized,
  score_out_of_range,
  decay_out_of_range,
  no_reports,
  report_out_of_range,
  // forecasting
  invalid_range,
  shape_mismatch,
  step_out_of_range,
  empty_dataset,
  inconsistent_shapes,
  non_finite_loss,
  empty_window,
  insufficient_calibration_data,
  not_calibrated,
  // simulation
  no_answers,
  label_mismatch,
  invalid_config,
  // io
  io_error,
  parse_error,
};

inline std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::invalid_signature: return "invalid_signature";
    case Errc::duplicate_record: return "duplicate_record";
    case Errc::malformed_payload: return "malformed_payload";
    case Errc::empty_pool: return "empty_pool";
    case Errc::empty_leaves: return "empty_leaves";
    case Errc::unknown_record: return "unknown_record";
    case Errc::not_yet_sealed: return "not_yet_sealed";
    case Errc::duplicate_agent: return "duplicate_agent";
    case Errc::insufficient_stake: return "insufficient_stake";
    case Errc::unknown_agent: return "unknown_agent";
    case Errc::suspended_agent: return "suspended_agent";
    case Errc::wrong_epoch: return "wrong_epoch";
    case Errc::epoch_already_closed: return "epoch_already_closed";
    case Errc::unknown_evidence: return "unknown_evidence";
    case Errc::dispute_not_open: return "dispute_not_open";
    case Errc::evidence_proof_invalid: return "evidence_proof_invalid";
    case Errc::dispute_not_evaluated: return "dispute_not_evaluated";
    case Errc::weights_not_normalized: return "weights_not_normalized";
    case Errc::score_out_of_range: return "score_out_of_range";
    case Errc::decay_out_of_range: return "decay_out_of_range";
    case Errc::no_reports: return "no_reports";
    case Errc::report_out_of_range: return "report_out_of_range";
    case Errc::invalid_range: return "invalid_range";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::step_out_of_range: return "step_out_of_range";
    case Errc::empty_dataset: return "empty_dataset";
    case Errc::inconsistent_shapes: return "inconsistent_shapes";
    case Errc::non_finite_loss: return "non_finite_loss";
    case Errc::empty_window: return "empty_window";
    case Errc::insufficient_calibration_data: return "insufficient_calibration_data";
    case Errc::not_calibrated: return "not_calibrated";
    case Errc::no_answers: return "no_answers";
    case Errc::label_mismatch: return "label_mismatch";
    case Errc::invalid_config: return "invalid_config";
    case Errc::io_error: return "io_error";
    case Errc::parse_error: return "parse_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace regulus
