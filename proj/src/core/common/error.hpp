// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mokd {

enum class ErrorCode {
  Usage,
  Config,
  Shape,
  Parameter,
  Numeric,
  Structural,
  Format,
  Io,
  Corruption,
  Incompatible,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the core carries one of the codes above so the C
/// boundary can translate it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mokd
