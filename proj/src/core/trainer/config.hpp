// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "data/augment.hpp"
#include "models/config.hpp"
#include "schedules/optimizer.hpp"

namespace mokd::trainer {

struct ModelSpec {
  models::NetworkConfig network;
  schedules::OptimizerConfig optimizer;
  double base_lr = 0.1;  // per 256 samples; scaled linearly by batch size
  double lambda = 1.0;   // cross-distillation weight
};

struct TrainConfig {
  std::array<ModelSpec, 2> models;
  bool t_branch = true;
  bool search_query_grad = false;
  double student_tau = 0.1;
  double teacher_tau_start = 0.04, teacher_tau = 0.07;
  int teacher_tau_ramp_epochs = 6;
  double center_momentum = 0.9;
  double ema_base = 0.99;
  int warmup_epochs = 2;
  double min_lr = 1e-6;
  data::AugmentConfig augment;
  std::size_t batch_size = 64;
  int epochs = 20;
  std::size_t steps_per_epoch = 0;  // 0 runs every full batch of the dataset
  std::uint64_t seed = 0;
  bool deterministic = true;
  int workers = 1;
  engine::DType dtype = engine::DType::F32;
  int checkpoint_every = 1;  // epochs; 0 keeps only the final checkpoint
  int audit_every = 0;       // steps; 0 disables the gradient-isolation audit
};

/// Defaults per architecture: SGD for conv, AdamW for transformers.
ModelSpec default_model(models::Arch arch, double lambda);

/// Mini-conv (lambda 0.1) paired with mini-ViT (lambda 1).
TrainConfig default_config();

/// Range checks on every field; throws a config error naming the field.
void validate(const TrainConfig& config);

/// Canonical text of every field that shapes the training trajectory
/// (excludes workers, checkpoint cadence and audit cadence).
std::string canonical_text(const TrainConfig& config);
std::uint64_t config_hash(const TrainConfig& config);

}  // namespace mokd::trainer
