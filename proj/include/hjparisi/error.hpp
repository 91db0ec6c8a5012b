// Copyright 2026 The hjparisi Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hjparisi {

enum class ErrorCode {
  InvalidArgument,
  NotIncreasing,
  BadBreakpoints,
  NotPsd,
  Singular,
  NonConvergence,
  PartitionMismatch,
  DegenerateBlock,
  BudgetExceeded,
  NotUltrametric,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NotIncreasing: return "NotIncreasing";
    case ErrorCode::BadBreakpoints: return "BadBreakpoints";
    case ErrorCode::NotPsd: return "NotPsd";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::PartitionMismatch: return "PartitionMismatch";
    case ErrorCode::DegenerateBlock: return "DegenerateBlock";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::NotUltrametric: return "NotUltrametric";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace hjparisi
