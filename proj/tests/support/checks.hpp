// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>

#include "common/error.hpp"
#include "doctest.h"

namespace testing_support {

inline void check_error(const std::function<void()>& fn, mokd::ErrorCode code) {
  try {
    fn();
    FAIL("expected an error");
  } catch (const mokd::Error& e) {
    CHECK_MESSAGE(e.code() == code, e.what());
  }
}

/// Also requires `needle` to appear in the message.
inline void check_error(mokd::ErrorCode code, const std::function<void()>& fn, const std::string& needle) {
  try {
    fn();
    FAIL("expected an error mentioning " << needle);
  } catch (const mokd::Error& e) {
    CHECK_MESSAGE(e.code() == code, e.what());
    CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
  }
}

}  // namespace testing_support
