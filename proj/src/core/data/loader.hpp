// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "data/augment.hpp"
#include "data/dataset.hpp"

namespace mokd::data {

struct LoaderConfig {
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  int workers = 1;         // threads that augment samples within a batch
  std::size_t prefetch = 2;  // batches buffered ahead of the consumer
  engine::DType dtype = engine::DType::F32;
};

/// One batch of views: globals first, then locals, each [B, 3, s, s].
struct Batch {
  std::size_t step_in_epoch = 0;
  std::vector<std::size_t> indices;
  std::vector<engine::Tensor> views;
  std::size_t global_count = 0;
};

/// Builds batch `b` of `epoch` directly; pure function of its arguments.
Batch make_batch(const LabeledDataset& data, const AugmentConfig& augment, const LoaderConfig& config,
                 std::uint64_t epoch, std::size_t b);

/// Full batches per epoch; the trailing partial batch is dropped.
std::size_t batches_per_epoch(std::size_t samples, std::size_t batch_size);

/// Produces one epoch of batches on a background thread through a bounded
/// queue. Batches are identical to make_batch for any worker count.
class EpochLoader {
 public:
  EpochLoader(const LabeledDataset& data, AugmentConfig augment, LoaderConfig config, std::uint64_t epoch,
              std::size_t first_batch = 0);
  ~EpochLoader();
  EpochLoader(const EpochLoader&) = delete;
  EpochLoader& operator=(const EpochLoader&) = delete;

  /// Next batch, or nothing at the end of the epoch. Rethrows producer errors.
  std::optional<Batch> next();

 private:
  void produce();

  const LabeledDataset& data_;
  AugmentConfig augment_;
  LoaderConfig config_;
  std::uint64_t epoch_;
  std::size_t first_batch_;
  std::size_t total_;
  std::mutex mutex_;
  std::condition_variable changed_;
  std::deque<Batch> queue_;
  std::exception_ptr error_;
  bool done_ = false;
  bool stop_ = false;
  std::thread thread_;
};

}  // namespace mokd::data
