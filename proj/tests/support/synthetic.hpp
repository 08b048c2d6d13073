// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

// Small labelled image sets with class-dependent structure, written in the
// on-disk formats the loaders accept.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "common/rng.hpp"
#include "data/dataset.hpp"

namespace testing_support {

/// Class c draws a stripe pattern with orientation and hue set by c, plus
/// per-image noise and phase.
inline mokd::data::Image synthetic_image(int label, int side, mokd::Rng& rng) {
  mokd::data::Image img;
  img.height = img.width = side;
  img.pixels.resize(static_cast<std::size_t>(3 * side * side));
  const double angle = 3.14159265358979 * (label % 5) / 5.0;
  const double freq = 0.35 + 0.15 * (label / 5);
  const double phase = mokd::uniform(rng, 0.0, 6.283);
  const double hue[3] = {0.5 + 0.4 * std::cos(label * 1.3), 0.5 + 0.4 * std::cos(label * 2.1 + 1),
                         0.5 + 0.4 * std::cos(label * 0.7 + 2)};
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double s = 0.5 + 0.5 * std::sin(freq * (x * std::cos(angle) + y * std::sin(angle)) + phase);
      for (int c = 0; c < 3; ++c) {
        const double v = hue[c] * s + 0.1 * mokd::uniform(rng, -1.0, 1.0);
        img.pixels[(static_cast<std::size_t>(c) * side + y) * side + x] =
            static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  return img;
}

inline mokd::data::LabeledDataset synthetic_dataset(std::size_t n, int classes, std::uint64_t seed, int side = 32) {
  mokd::data::LabeledDataset d;
  d.classes = classes;
  mokd::Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
    d.images.push_back(synthetic_image(label, side, rng));
    d.labels.push_back(label);
  }
  for (int c = 0; c < classes; ++c) d.class_names.push_back("class" + std::to_string(c));
  return d;
}

/// Writes 32x32 images as CIFAR-10 binary records.
inline void write_cifar(const std::filesystem::path& path, const mokd::data::LabeledDataset& d) {
  std::ofstream out(path, std::ios::binary);
  for (std::size_t i = 0; i < d.size(); ++i) {
    out.put(static_cast<char>(d.labels[i]));
    out.write(reinterpret_cast<const char*>(d.images[i].pixels.data()),
              static_cast<std::streamsize>(d.images[i].pixels.size()));
  }
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mokd_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_support
