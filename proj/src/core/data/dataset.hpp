// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "engine/tensor.hpp"

namespace mokd::data {

enum class Format : std::uint8_t { CifarBinary = 0, ImageDirectory = 1 };

const char* to_string(Format format);
Format parse_format(const std::string& name);

/// 8-bit RGB image stored channel-planar (3 x h x w).
struct Image {
  int height = 0, width = 0;
  std::vector<std::uint8_t> pixels;

  /// Value of channel c at (y, x) scaled to [0, 1].
  float at(int c, int y, int x) const {
    return static_cast<float>(pixels[(static_cast<std::size_t>(c) * height + y) * width + x]) / 255.0F;
  }
};

/// Images with integer class ids. Labels are only consumed by evaluation.
struct LabeledDataset {
  std::vector<Image> images;
  std::vector<std::int32_t> labels;
  int classes = 0;
  std::vector<std::string> class_names;

  std::size_t size() const { return images.size(); }
  /// Keeps the first n samples (all when n is 0 or larger than the set).
  void truncate(std::size_t n);
};

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr int kCifarSide = 32;

/// Concatenates CIFAR-10 binary batch files (1 label byte + 3072 pixel bytes
/// per record). A short trailing record is a format error naming its offset.
LabeledDataset load_cifar_binary(const std::vector<std::filesystem::path>& files);

/// One subdirectory per class (sorted by name), each holding binary PPM (P6,
/// maxval 255) images.
LabeledDataset load_image_directory(const std::filesystem::path& root);

enum class Split : std::uint8_t { Train = 0, Test = 1 };

/// `path` may name a CIFAR batch file or a directory holding data_batch_*.bin
/// (train) and test_batch.bin (test). For an image directory, `path` is the
/// class root itself and `split` is ignored.
LabeledDataset load_dataset(const std::filesystem::path& path, Format format, Split split = Split::Train);

/// Writes a binary PPM; used by tests and examples.
void write_ppm(const std::filesystem::path& path, const Image& image);

/// Per-channel normalization applied after augmentation.
inline constexpr float kChannelMean[3] = {0.4914F, 0.4822F, 0.4465F};
inline constexpr float kChannelStd[3] = {0.2470F, 0.2435F, 0.2616F};

/// Deterministic evaluation input: each image bilinearly resized to
/// side x side and normalized, stacked as [n, 3, side, side].
engine::Tensor eval_batch(const LabeledDataset& data, std::size_t begin, std::size_t end, int side,
                          engine::DType dtype = engine::DType::F32);

}  // namespace mokd::data
