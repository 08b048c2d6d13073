// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>

#include "data/loader.hpp"
#include "distill/losses.hpp"
#include "models/network.hpp"
#include "schedules/optimizer.hpp"
#include "schedules/schedule.hpp"
#include "trainer/config.hpp"

namespace mokd::trainer {

using engine::Tensor;

/// Center vectors indexed [model][head], head 0 = MLP, 1 = T.
using Centers = std::array<std::array<Tensor, 2>, 2>;

struct TrainState {
  std::int64_t step = 0;  // steps executed so far
  std::int64_t epoch = 0;
  std::int64_t step_in_epoch = 0;
  models::ModelPair pair;
  std::array<schedules::Optimizer, 2> optimizers;
  Centers centers;
  std::uint64_t seed = 0;  // every random stream derives from (seed, counters)
  std::uint64_t config_hash = 0;
};

TrainState init_state(const TrainConfig& config);

struct Schedules {
  std::array<schedules::ScheduleSpec, 2> lr;
  schedules::ScheduleSpec teacher_tau;
  schedules::ScheduleSpec ema;
  std::int64_t steps_per_epoch = 0;
};

/// Full batches per epoch, capped by config.steps_per_epoch when set.
std::int64_t steps_per_epoch(const TrainConfig& config, std::size_t dataset_size);
Schedules make_schedules(const TrainConfig& config, std::int64_t steps_per_epoch);

/// Losses of one forward pass plus what the step needs afterwards.
struct ForwardResult {
  std::array<distill::LossBreakdown, 2> losses;
  Centers teacher_logits;  // momentum logits concatenated over global views
  std::array<double, 2> entropy_mlp{}, entropy_t{};
};

/// Forward of all four networks on one batch of views (globals first) and
/// assembly of both models' losses. Mutates nothing.
ForwardResult forward_losses(const models::ModelPair& pair, const Centers& centers, const TrainConfig& config,
                             std::span<const Tensor> views, std::size_t globals, double teacher_tau);

struct ModelMetrics {
  double sm = 0, st = 0, cm = 0, ct = 0, self = 0, cross = 0, total = 0, lambda = 0;
  double entropy_mlp = 0, entropy_t = 0;
  double lr = 0;
  bool identities_hold = false;
};

struct MetricsRecord {
  std::int64_t step = 0, epoch = 0;
  std::array<ModelMetrics, 2> models;
  double teacher_tau = 0, ema = 0;
  double wall_ms = 0;
  bool audited = false;

  /// One JSON object on a single line; T-branch terms are null when off.
  std::string to_json(bool t_branch) const;
};

struct StepOptions {
  /// Checks that each loss reaches only its own online parameters. Momentum
  /// parameters are made differentiable for the step so leaks are visible.
  bool audit = false;
};

/// One step: forward, backward L1 then L2, optimizer steps, EMA, centers.
MetricsRecord train_step(TrainState& state, const TrainConfig& config, const Schedules& schedules,
                         const data::Batch& batch, const StepOptions& options = {});

/// A single model trained alone with self-distillation on the MLP head,
/// initialized exactly like model `index` of the pair.
struct SoloState {
  int index = 0;
  std::int64_t step = 0;
  models::Network online, momentum;
  schedules::Optimizer optimizer;
  Tensor center;
};

SoloState init_solo(const TrainConfig& config, int index);
double solo_step(SoloState& state, const TrainConfig& config, const Schedules& schedules, const data::Batch& batch);

struct RunPaths {
  std::filesystem::path output_dir;  // receives checkpoints/ and metrics.ndjson
  std::filesystem::path resume;      // optional checkpoint to continue from
  bool force = false;                // accept a checkpoint from another config
};

struct RunResult {
  TrainState state;
  std::int64_t steps_executed = 0;
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics;
};

using ProgressFn = std::function<void(const MetricsRecord&)>;

/// Trains for config.epochs, appending one metrics line per step and
/// checkpointing at epoch ends. `stop_after_steps` > 0 halts early after a
/// checkpoint, which is how interruption is simulated.
RunResult run_pretraining(const TrainConfig& config, const data::LabeledDataset& data, const RunPaths& paths,
                          const ProgressFn& progress = {}, std::int64_t stop_after_steps = 0);

}  // namespace mokd::trainer
