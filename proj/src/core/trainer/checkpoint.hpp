// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "trainer/trainer.hpp"

namespace mokd::trainer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Header fields readable without a config.
struct CheckpointInfo {
  std::uint32_t version = 0;
  std::uint64_t config_hash = 0;
  std::int64_t step = 0, epoch = 0, step_in_epoch = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> names;
};

/// Every tensor of the state under a stable name, in file order.
engine::ParamList state_tensors(const TrainState& state);

/// Single file: magic, version, config hash, counters, then one
/// name/dtype/shape/payload entry per tensor and a trailing CRC-32. Written
/// to a temporary file and renamed, so a failed save leaves the previous
/// file intact.
void checkpoint_save(const TrainState& state, const std::filesystem::path& path);

/// Reads and verifies a checkpoint. A version mismatch is an incompatibility
/// error; a bad checksum or short file is a corruption error.
CheckpointInfo checkpoint_info(const std::filesystem::path& path);

/// Rebuilds the state for `config` and fills it from the file. A config-hash
/// mismatch is refused unless `force`, in which case `warn` is told and
/// structural agreement is still required.
TrainState checkpoint_load(const std::filesystem::path& path, const TrainConfig& config, bool force = false,
                           const std::function<void(const std::string&)>& warn = {});

}  // namespace mokd::trainer
