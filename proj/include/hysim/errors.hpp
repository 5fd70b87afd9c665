// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hysim {

/// Machine-readable failure classes used across the library.
enum class errc {
  // hybrid time domains
  non_monotone_times,
  gap_between_jumps,
  non_consecutive_j,
  empty_domain,
  open_non_final,
  point_outside_domain,
  // signals
  beyond_horizon,
  not_absolutely_continuous,
  breakpoint_nondifferentiable,
  value_outside_input_set,
  bad_signal_config,
  // sets
  dimension_mismatch,
  unsupported_variant,
  point_not_in_set,
  // system
  jump_set_violation,
  selection_outside_enclosure,
  // simulator
  start_outside_flow_set,
  step_underflow,
  horizon_mismatch,
  // viability
  flow_set_not_split,
  unsupported_signal_shape,
  empty_kw,
  not_output_form,
  // io / cli
  io_failure,
  bad_config,
  internal
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::non_monotone_times: return "NonMonotoneTimes";
    case errc::gap_between_jumps: return "GapBetweenJumps";
    case errc::non_consecutive_j: return "NonConsecutiveJ";
    case errc::empty_domain: return "EmptyDomain";
    case errc::open_non_final: return "OpenNonFinal";
    case errc::point_outside_domain: return "PointOutsideDomain";
    case errc::beyond_horizon: return "BeyondHorizon";
    case errc::not_absolutely_continuous: return "NotAbsolutelyContinuous";
    case errc::breakpoint_nondifferentiable: return "BreakpointNondifferentiable";
    case errc::value_outside_input_set: return "ValueOutsideInputSet";
    case errc::bad_signal_config: return "BadSignalConfig";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::unsupported_variant: return "UnsupportedVariant";
    case errc::point_not_in_set: return "PointNotInSet";
    case errc::jump_set_violation: return "JumpSetViolation";
    case errc::selection_outside_enclosure: return "SelectionOutsideEnclosure";
    case errc::start_outside_flow_set: return "StartOutsideFlowSet";
    case errc::step_underflow: return "StepUnderflow";
    case errc::horizon_mismatch: return "HorizonMismatch";
    case errc::flow_set_not_split: return "FlowSetNotSplit";
    case errc::unsupported_signal_shape: return "UnsupportedSignalShape";
    case errc::empty_kw: return "EmptyKw";
    case errc::not_output_form: return "NotOutputForm";
    case errc::io_failure: return "IoFailure";
    case errc::bad_config: return "BadConfig";
    case errc::internal: return "Internal";
  }
  return "Unknown";
}

/// Exception carrying a typed failure class alongside the message.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

}  // namespace hysim
