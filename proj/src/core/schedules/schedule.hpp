// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "engine/param.hpp"

namespace mokd::schedules {

enum class ScheduleKind : std::uint8_t {
  WarmupCosine,  // linear start -> base over warmup, then cosine base -> final
  LinearRamp,    // linear start -> base over warmup, then hold base
  CosineToOne,   // cosine from base at step 0 to 1 at the last step
  Constant,
};

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::Constant;
  double base = 0.0;
  double start = 0.0;  // value at step 0 for the warmup kinds
  double final = 0.0;  // cosine end value for WarmupCosine
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1;
};

double schedule_value(const ScheduleSpec& spec, std::int64_t step);

ScheduleSpec warmup_cosine(double base, double final, std::int64_t warmup_steps, std::int64_t total_steps);
ScheduleSpec linear_ramp(double start, double end, std::int64_t ramp_steps, std::int64_t total_steps);
ScheduleSpec cosine_to_one(double base, std::int64_t total_steps);
ScheduleSpec constant(double value, std::int64_t total_steps);

/// theta' <- l theta' + (1 - l) theta for every pair of tensors, evaluated in
/// the tensors' precision as l * theta' + (1 - l) * theta with (1 - l)
/// rounded from double.
void ema_update(const engine::ParamList& teacher, const engine::ParamList& student, double l);

}  // namespace mokd::schedules
