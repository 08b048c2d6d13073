// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "common/error.hpp"

namespace mokd {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Usage: return "usage error";
    case ErrorCode::Config: return "configuration error";
    case ErrorCode::Shape: return "shape error";
    case ErrorCode::Parameter: return "parameter error";
    case ErrorCode::Numeric: return "numeric error";
    case ErrorCode::Structural: return "structural error";
    case ErrorCode::Format: return "format error";
    case ErrorCode::Io: return "I/O error";
    case ErrorCode::Corruption: return "corruption error";
    case ErrorCode::Incompatible: return "incompatible format";
  }
  return "unknown error";
}

}  // namespace mokd
