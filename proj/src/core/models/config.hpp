// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mokd::models {

enum class Arch : std::uint8_t { Conv = 0, Vit = 1 };

const char* to_string(Arch arch);
Arch parse_arch(const std::string& name);

struct ConvConfig {
  std::int64_t stem_width = 32;
  std::vector<std::int64_t> widths{32, 64, 128};  // one downsampling stage each
  int groups = 8;
};

struct VitConfig {
  std::int64_t image_size = 32;  // positional grid is sized for this input
  std::int64_t patch = 4;
  std::int64_t width = 128;
  int depth = 4;
  int heads = 4;
  double mlp_ratio = 2.0;
};

struct HeadConfig {
  std::int64_t hidden = 256;
  std::int64_t bottleneck = 64;
  std::int64_t out_dim = 1024;  // K
  std::int64_t t_width = 128;
  int t_heads = 4;
  int t_depth = 3;
  double t_mlp_ratio = 2.0;
};

struct NetworkConfig {
  Arch arch = Arch::Conv;
  ConvConfig conv;
  VitConfig vit;
  HeadConfig head;

  std::int64_t channels() const { return arch == Arch::Conv ? conv.widths.back() : vit.width; }
};

}  // namespace mokd::models
