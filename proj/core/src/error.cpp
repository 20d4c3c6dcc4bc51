// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#include "ddt/error.hpp"

namespace ddt {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::UnsupportedToken: return "UnsupportedToken";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::SupportMismatch: return "SupportMismatch";
    case ErrorCode::InvalidState: return "InvalidState";
    case ErrorCode::AnalysisOverrun: return "AnalysisOverrun";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace ddt
