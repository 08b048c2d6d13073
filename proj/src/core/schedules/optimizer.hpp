// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "engine/param.hpp"

namespace mokd::schedules {

enum class OptimizerKind : std::uint8_t { Sgd = 0, AdamW = 1 };

const char* to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double weight_decay = 0.0;
  double momentum = 0.9;  // SGD
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;  // AdamW
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
};

/// SGD with momentum (weight decay added to the gradient) or AdamW
/// (decoupled decay). Decay applies to parameters flagged `decay` only.
/// Parameters without a gradient are left untouched.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(const OptimizerConfig& config, engine::ParamList params);

  /// Applies one update with learning rate `lr` and clears the gradients.
  /// Throws a numeric error, leaving every parameter untouched, when any
  /// gradient is non-finite.
  void step(double lr);

  const OptimizerConfig& config() const { return config_; }
  const engine::ParamList& params() const { return params_; }
  std::int64_t steps() const { return steps_; }

  /// Moment buffers, named after their parameters, for checkpointing.
  engine::ParamList state() const;
  void set_steps(std::int64_t steps) { steps_ = steps; }

 private:
  OptimizerConfig config_;
  engine::ParamList params_;
  std::vector<engine::Tensor> first_;   // SGD velocity or Adam first moment
  std::vector<engine::Tensor> second_;  // Adam second moment
  std::int64_t steps_ = 0;
};

}  // namespace mokd::schedules
