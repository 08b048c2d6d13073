// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "data/loader.hpp"

#include <algorithm>

namespace mokd::data {

std::size_t batches_per_epoch(std::size_t samples, std::size_t batch_size) {
  if (batch_size == 0) throw Error(ErrorCode::Config, "batch size must be positive");
  return samples / batch_size;
}

Batch make_batch(const LabeledDataset& data, const AugmentConfig& augment, const LoaderConfig& config,
                 std::uint64_t epoch, std::size_t b) {
  const std::size_t n = batches_per_epoch(data.size(), config.batch_size);
  if (b >= n) throw Error(ErrorCode::Usage, "batch index past the end of the epoch");
  const auto perm = epoch_permutation(data.size(), config.seed, epoch);
  Batch batch;
  batch.step_in_epoch = b;
  batch.indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(b * config.batch_size),
                       perm.begin() + static_cast<std::ptrdiff_t>((b + 1) * config.batch_size));

  std::vector<ViewSet> sets(config.batch_size);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t idx = batch.indices[i];
      Rng rng = sample_rng(config.seed, epoch, idx);
      sets[i] = multicrop_augment(data.images[idx], augment, rng);
      sets[i].source = idx;
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, config.workers));
  if (workers == 1) {
    work(0, sets.size());
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (sets.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(sets.size(), w * chunk), end = std::min(sets.size(), begin + chunk);
      pool.emplace_back([&, w, begin, end] {
        try {
          work(begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  batch.global_count = static_cast<std::size_t>(augment.global.count);
  const std::size_t views = batch.global_count + static_cast<std::size_t>(augment.local.count);
  for (std::size_t v = 0; v < views; ++v) batch.views.push_back(stack_view(sets, v, config.dtype));
  return batch;
}

EpochLoader::EpochLoader(const LabeledDataset& data, AugmentConfig augment, LoaderConfig config, std::uint64_t epoch,
                         std::size_t first_batch)
    : data_(data),
      augment_(augment),
      config_(config),
      epoch_(epoch),
      first_batch_(first_batch),
      total_(batches_per_epoch(data.size(), config.batch_size)) {
  if (config_.prefetch == 0) config_.prefetch = 1;
  thread_ = std::thread([this] { produce(); });
}

EpochLoader::~EpochLoader() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  changed_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void EpochLoader::produce() {
  try {
    for (std::size_t b = first_batch_; b < total_; ++b) {
      Batch batch = make_batch(data_, augment_, config_, epoch_, b);
      std::unique_lock lock(mutex_);
      changed_.wait(lock, [&] { return stop_ || queue_.size() < config_.prefetch; });
      if (stop_) return;
      queue_.push_back(std::move(batch));
      changed_.notify_all();
    }
  } catch (...) {
    std::lock_guard lock(mutex_);
    error_ = std::current_exception();
  }
  std::lock_guard lock(mutex_);
  done_ = true;
  changed_.notify_all();
}

std::optional<Batch> EpochLoader::next() {
  std::unique_lock lock(mutex_);
  changed_.wait(lock, [&] { return !queue_.empty() || done_; });
  if (!queue_.empty()) {
    Batch b = std::move(queue_.front());
    queue_.pop_front();
    changed_.notify_all();
    return b;
  }
  if (error_) std::rethrow_exception(error_);
  return std::nullopt;
}

}  // namespace mokd::data
