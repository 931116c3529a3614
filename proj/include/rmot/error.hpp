// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rmot {

enum class ErrorCode {
  parse,
  validation,
  not_found,
  click_rejected,
  no_op,
  out_of_range,
  invalid_argument,
  dimension_mismatch,
  io,
  conflict,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return "parse_error";
    case ErrorCode::validation: return "validation_error";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::click_rejected: return "click_rejected";
    case ErrorCode::no_op: return "no_op";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::io: return "io_error";
    case ErrorCode::conflict: return "conflict";
  }
  return "unknown";
}

/// Every failure raised by the library. `field()` names the offending
/// input location (JSON path, CSV line, object/expression id) when known.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string field = {})
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

}  // namespace rmot
