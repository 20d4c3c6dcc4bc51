// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ddt {

enum class ErrorCode {
  InvalidArgument,
  EmptySequence,
  UnsupportedToken,
  DegenerateVariance,
  ProviderUnavailable,
  ProtocolError,
  SupportMismatch,
  InvalidState,
  AnalysisOverrun,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // ProviderUnavailable is the only transient failure.
  bool retryable() const noexcept { return code_ == ErrorCode::ProviderUnavailable; }

 private:
  ErrorCode code_;
};

}  // namespace ddt
