// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "common/rng.hpp"
#include "data/dataset.hpp"

namespace mokd::data {

struct CropSpec {
  int count = 0;
  int size = 0;
  double scale_min = 0.0, scale_max = 1.0;  // fraction of the source area
};

struct AugmentConfig {
  CropSpec global{2, 32, 0.25, 1.0};
  CropSpec local{8, 16, 0.05, 0.25};
  double flip_prob = 0.5;
  double jitter_prob = 0.8;
  double brightness = 0.4, contrast = 0.4, saturation = 0.2, hue = 0.1;
  double grayscale_prob = 0.2;
  // Blur applies to global views only: the first always, the second rarely.
  double blur_prob_first = 1.0, blur_prob_other = 0.1;
  double blur_sigma_min = 0.1, blur_sigma_max = 2.0;
  bool normalize = true;
};

/// One image's crops, each a float buffer 3 x size x size. Carries no label.
struct ViewSet {
  std::vector<std::vector<float>> globals;
  std::vector<std::vector<float>> locals;
  std::size_t source = 0;
};

/// Bilinear resample of the crop (top, left, h, w) of `image` to
/// side x side, half-pixel centers, clamped to the crop. Writes 3 planes.
void resized_crop(const Image& image, double top, double left, double h, double w, int side, std::span<float> out);

/// Area-scale and aspect-ratio crop box as (top, left, h, w); ten draws, then
/// a centered fallback, so a degenerate box is never returned.
struct CropBox {
  int top = 0, left = 0, height = 0, width = 0;
};
CropBox sample_crop(int height, int width, double scale_min, double scale_max, Rng& rng);

/// Multi-crop views for one image from its own generator.
ViewSet multicrop_augment(const Image& image, const AugmentConfig& config, Rng& rng);

/// Generator for sample `index` in `epoch`; depends on nothing else.
inline Rng sample_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  return derive_rng(seed, {kStreamAugment, epoch, index});
}

/// Seeded permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// Stacks view `v` of each set (globals first, then locals) into [B, 3, s, s].
engine::Tensor stack_view(std::span<const ViewSet> batch, std::size_t v, engine::DType dtype = engine::DType::F32);

}  // namespace mokd::data
