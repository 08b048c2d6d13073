// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "schedules/schedule.hpp"

#include <cmath>
#include <numbers>

namespace mokd::schedules {

using namespace engine;

double schedule_value(const ScheduleSpec& s, std::int64_t step) {
  if (step < 0 || step >= s.total_steps) {
    throw Error(ErrorCode::Usage, "schedule step " + std::to_string(step) + " outside [0, " +
                                      std::to_string(s.total_steps) + ")");
  }
  const auto warm = [&] {
    return s.start + (s.base - s.start) * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  };
  switch (s.kind) {
    case ScheduleKind::Constant:
      return s.base;
    case ScheduleKind::LinearRamp:
      return step < s.warmup_steps ? warm() : s.base;
    case ScheduleKind::WarmupCosine: {
      if (step < s.warmup_steps) return warm();
      const auto span = s.total_steps - s.warmup_steps;
      const double x = static_cast<double>(step - s.warmup_steps) / static_cast<double>(span);
      return s.final + 0.5 * (s.base - s.final) * (1.0 + std::cos(std::numbers::pi * x));
    }
    case ScheduleKind::CosineToOne: {
      const double x = s.total_steps > 1 ? static_cast<double>(step) / static_cast<double>(s.total_steps - 1) : 1.0;
      return 1.0 + 0.5 * (s.base - 1.0) * (1.0 + std::cos(std::numbers::pi * x));
    }
  }
  return s.base;
}

namespace {

void require_total(std::int64_t total) {
  if (total < 1) throw Error(ErrorCode::Config, "schedule needs at least one step");
}

}  // namespace

ScheduleSpec warmup_cosine(double base, double final, std::int64_t warmup_steps, std::int64_t total_steps) {
  require_total(total_steps);
  if (warmup_steps < 0 || warmup_steps >= total_steps) {
    throw Error(ErrorCode::Config, "warmup of " + std::to_string(warmup_steps) + " steps does not fit in " +
                                       std::to_string(total_steps));
  }
  return {ScheduleKind::WarmupCosine, base, 0.0, final, warmup_steps, total_steps};
}

ScheduleSpec linear_ramp(double start, double end, std::int64_t ramp_steps, std::int64_t total_steps) {
  require_total(total_steps);
  if (ramp_steps < 0) throw Error(ErrorCode::Config, "negative ramp length");
  return {ScheduleKind::LinearRamp, end, start, end, ramp_steps, total_steps};
}

ScheduleSpec cosine_to_one(double base, std::int64_t total_steps) {
  require_total(total_steps);
  if (!(base >= 0.0 && base <= 1.0)) throw Error(ErrorCode::Config, "momentum base must lie in [0, 1]");
  return {ScheduleKind::CosineToOne, base, base, 1.0, 0, total_steps};
}

ScheduleSpec constant(double value, std::int64_t total_steps) {
  require_total(total_steps);
  return {ScheduleKind::Constant, value, value, value, 0, total_steps};
}

void ema_update(const ParamList& teacher, const ParamList& student, double l) {
  if (!(l >= 0.0 && l <= 1.0)) throw Error(ErrorCode::Parameter, "EMA momentum must lie in [0, 1]");
  if (teacher.size() != student.size()) {
    throw Error(ErrorCode::Structural, "EMA over " + std::to_string(teacher.size()) + " teacher and " +
                                           std::to_string(student.size()) + " student tensors");
  }
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    Tensor t = teacher[i].tensor;
    const Tensor& s = student[i].tensor;
    if (t.shape() != s.shape() || t.dtype() != s.dtype()) {
      throw Error(ErrorCode::Structural, "EMA shape mismatch at " + teacher[i].name + ": " + to_string(t.shape()) +
                                             " vs " + to_string(s.shape()));
    }
    dispatch(t.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T a = static_cast<T>(l), b = static_cast<T>(1.0 - l);
      auto tv = t.mutable_data<T>();
      auto sv = s.data<T>();
      for (std::size_t k = 0; k < tv.size(); ++k) tv[k] = a * tv[k] + b * sv[k];
    });
  }
}

}  // namespace mokd::schedules
