// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "data/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace mokd::data {

namespace {

using Planes = std::vector<float>;  // 3 x s x s

void clamp01(Planes& p) {
  for (float& v : p) v = std::clamp(v, 0.0F, 1.0F);
}

float gray(const Planes& p, std::size_t plane, std::size_t i) {
  return 0.299F * p[i] + 0.587F * p[plane + i] + 0.114F * p[2 * plane + i];
}

void adjust_brightness(Planes& p, float f) {
  for (float& v : p) v *= f;
  clamp01(p);
}

void adjust_contrast(Planes& p, std::size_t plane, float f) {
  double m = 0;
  for (std::size_t i = 0; i < plane; ++i) m += gray(p, plane, i);
  const float mean = static_cast<float>(m / static_cast<double>(plane));
  for (float& v : p) v = (v - mean) * f + mean;
  clamp01(p);
}

void adjust_saturation(Planes& p, std::size_t plane, float f) {
  for (std::size_t i = 0; i < plane; ++i) {
    const float g = gray(p, plane, i);
    for (std::size_t c = 0; c < 3; ++c) p[c * plane + i] = (p[c * plane + i] - g) * f + g;
  }
  clamp01(p);
}

void adjust_hue(Planes& p, std::size_t plane, float shift) {
  for (std::size_t i = 0; i < plane; ++i) {
    float r = p[i], g = p[plane + i], b = p[2 * plane + i];
    const float mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
    float h = 0;
    if (d > 0) {
      if (mx == r) {
        h = std::fmod((g - b) / d, 6.0F);
      } else if (mx == g) {
        h = (b - r) / d + 2.0F;
      } else {
        h = (r - g) / d + 4.0F;
      }
      h /= 6.0F;
    }
    h += shift;
    h -= std::floor(h);
    const float s = mx > 0 ? d / mx : 0.0F, v = mx;
    const float hh = h * 6.0F;
    const int sector = static_cast<int>(hh) % 6;
    const float f = hh - std::floor(hh);
    const float pp = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (sector) {
      case 0: r = v, g = t, b = pp; break;
      case 1: r = q, g = v, b = pp; break;
      case 2: r = pp, g = v, b = t; break;
      case 3: r = pp, g = q, b = v; break;
      case 4: r = t, g = pp, b = v; break;
      default: r = v, g = pp, b = q; break;
    }
    p[i] = r;
    p[plane + i] = g;
    p[2 * plane + i] = b;
  }
  clamp01(p);
}

void to_grayscale(Planes& p, std::size_t plane) {
  for (std::size_t i = 0; i < plane; ++i) {
    const float g = gray(p, plane, i);
    p[i] = p[plane + i] = p[2 * plane + i] = g;
  }
}

// Separable 3-tap Gaussian with reflected borders.
void blur3(Planes& p, int side, double sigma) {
  const double e = std::exp(-1.0 / (2.0 * sigma * sigma));
  const float w1 = static_cast<float>(e / (1.0 + 2.0 * e)), w0 = static_cast<float>(1.0 / (1.0 + 2.0 * e));
  const auto s = static_cast<std::size_t>(side);
  auto reflect = [side](int i) { return i < 0 ? -i : (i >= side ? 2 * side - 2 - i : i); };
  Planes tmp(p.size());
  for (std::size_t c = 0; c < 3; ++c) {
    float* src = p.data() + c * s * s;
    float* mid = tmp.data() + c * s * s;
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        mid[y * side + x] = w1 * src[y * side + reflect(x - 1)] + w0 * src[y * side + x] + w1 * src[y * side + reflect(x + 1)];
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        src[y * side + x] = w1 * mid[reflect(y - 1) * side + x] + w0 * mid[y * side + x] + w1 * mid[reflect(y + 1) * side + x];
  }
}

void hflip(Planes& p, int side) {
  const auto s = static_cast<std::size_t>(side);
  for (std::size_t row = 0; row < 3 * s; ++row) std::reverse(p.begin() + row * s, p.begin() + (row + 1) * s);
}

void color_jitter(Planes& p, std::size_t plane, const AugmentConfig& c, Rng& rng) {
  std::array<int, 4> order{0, 1, 2, 3};
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);
  for (int op : order) {
    switch (op) {
      case 0:
        if (c.brightness > 0) adjust_brightness(p, static_cast<float>(uniform(rng, 1 - c.brightness, 1 + c.brightness)));
        break;
      case 1:
        if (c.contrast > 0) adjust_contrast(p, plane, static_cast<float>(uniform(rng, 1 - c.contrast, 1 + c.contrast)));
        break;
      case 2:
        if (c.saturation > 0) {
          adjust_saturation(p, plane, static_cast<float>(uniform(rng, 1 - c.saturation, 1 + c.saturation)));
        }
        break;
      default:
        if (c.hue > 0) adjust_hue(p, plane, static_cast<float>(uniform(rng, -c.hue, c.hue)));
        break;
    }
  }
}

Planes make_view(const Image& image, const CropSpec& spec, double blur_prob, const AugmentConfig& c, Rng& rng) {
  const int side = spec.size;
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  Planes p(3 * plane);
  const CropBox box = sample_crop(image.height, image.width, spec.scale_min, spec.scale_max, rng);
  resized_crop(image, box.top, box.left, box.height, box.width, side, p);
  if (uniform01(rng) < c.flip_prob) hflip(p, side);
  if (uniform01(rng) < c.jitter_prob) color_jitter(p, plane, c, rng);
  if (uniform01(rng) < c.grayscale_prob) to_grayscale(p, plane);
  if (uniform01(rng) < blur_prob) blur3(p, side, uniform(rng, c.blur_sigma_min, c.blur_sigma_max));
  clamp01(p);
  if (c.normalize) {
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t k = 0; k < plane; ++k) p[ch * plane + k] = (p[ch * plane + k] - kChannelMean[ch]) / kChannelStd[ch];
  }
  return p;
}

}  // namespace

void resized_crop(const Image& image, double top, double left, double h, double w, int side, std::span<float> out) {
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  const double y_max = top + h - 1, x_max = left + w - 1;
  for (int y = 0; y < side; ++y) {
    const double sy = std::clamp(top + (y + 0.5) * h / side - 0.5, top, y_max);
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, static_cast<int>(y_max));
    const float fy = static_cast<float>(sy - y0);
    for (int x = 0; x < side; ++x) {
      const double sx = std::clamp(left + (x + 0.5) * w / side - 0.5, left, x_max);
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, static_cast<int>(x_max));
      const float fx = static_cast<float>(sx - x0);
      for (int c = 0; c < 3; ++c) {
        const float top_v = image.at(c, y0, x0) * (1 - fx) + image.at(c, y0, x1) * fx;
        const float bot_v = image.at(c, y1, x0) * (1 - fx) + image.at(c, y1, x1) * fx;
        out[c * plane + static_cast<std::size_t>(y) * side + x] = top_v * (1 - fy) + bot_v * fy;
      }
    }
  }
}

CropBox sample_crop(int height, int width, double scale_min, double scale_max, Rng& rng) {
  const double area = static_cast<double>(height) * width;
  const double log_lo = std::log(3.0 / 4.0), log_hi = std::log(4.0 / 3.0);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * uniform(rng, scale_min, scale_max);
    const double ratio = std::exp(uniform(rng, log_lo, log_hi));
    const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (w > 0 && h > 0 && w <= width && h <= height) {
      const int top = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(height - h + 1)));
      const int left = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(width - w + 1)));
      return {top, left, h, w};
    }
  }
  // Centered fallback at the smallest allowed area, never empty.
  const int side = std::max(1, std::min({height, width, static_cast<int>(std::lround(std::sqrt(area * scale_min)))}));
  return {(height - side) / 2, (width - side) / 2, side, side};
}

ViewSet multicrop_augment(const Image& image, const AugmentConfig& config, Rng& rng) {
  if (image.height < 1 || image.width < 1) throw Error(ErrorCode::Usage, "cannot augment an empty image");
  ViewSet set;
  for (int g = 0; g < config.global.count; ++g) {
    const double blur = g == 0 ? config.blur_prob_first : config.blur_prob_other;
    set.globals.push_back(make_view(image, config.global, blur, config, rng));
  }
  for (int l = 0; l < config.local.count; ++l) set.locals.push_back(make_view(image, config.local, 0.0, config, rng));
  return set;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng = derive_rng(seed, {kStreamShuffle, epoch});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  return perm;
}

engine::Tensor stack_view(std::span<const ViewSet> batch, std::size_t v, engine::DType dtype) {
  if (batch.empty()) throw Error(ErrorCode::Usage, "empty batch");
  const auto& first = batch.front();
  const bool global = v < first.globals.size();
  const std::size_t local = v - first.globals.size();
  if (!global && local >= first.locals.size()) throw Error(ErrorCode::Usage, "view index out of range");
  const auto& sample = global ? first.globals[v] : first.locals[local];
  const auto side = static_cast<std::int64_t>(std::lround(std::sqrt(static_cast<double>(sample.size() / 3))));
  std::vector<float> buf;
  buf.reserve(sample.size() * batch.size());
  for (const auto& set : batch) {
    const auto& view = global ? set.globals[v] : set.locals[local];
    buf.insert(buf.end(), view.begin(), view.end());
  }
  engine::Tensor t = engine::Tensor::from_buffer({static_cast<std::int64_t>(batch.size()), 3, side, side}, std::move(buf));
  return dtype == engine::DType::F32 ? t : t.to(dtype);
}

}  // namespace mokd::data
