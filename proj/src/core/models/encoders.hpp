// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "engine/attention.hpp"
#include "engine/param.hpp"
#include "models/config.hpp"

namespace mokd::models {

using engine::DType;
using engine::ParamList;
using engine::Tensor;

/// Encoder output for a batch: tokens Z [B, N, C] and pooled z [B, C], the
/// mean of Z over N.
struct Representation {
  Tensor tokens;
  Tensor pooled;
};

/// Optional analysis outputs, all detached.
struct EncodeCapture {
  std::vector<Tensor> attention;     // ViT: per layer [B, heads, N, N]
  std::vector<Tensor> feature_maps;  // conv: per stage [B, C, h, w]
};

struct ConvLayer {
  Tensor kernel, bias;     // [F, C, k, k], [F]
  Tensor gn_gamma, gn_beta;
  int stride = 1, padding = 0;
};

struct ConvStage {
  ConvLayer down;           // 2x2, stride 2
  ConvLayer res_a, res_b;   // 3x3, stride 1
};

struct ConvEncoder {
  ConvConfig config;
  ConvLayer stem;
  std::vector<ConvStage> stages;

  static ConvEncoder create(const ConvConfig& config, DType dtype, Rng& rng);
  int total_stride() const { return 1 << stages.size(); }
  void visit(const std::string& prefix, const engine::TensorVisitor& f);
  void collect(const std::string& prefix, ParamList& out) const { engine::append_params(*this, prefix, out); }
};

struct VitEncoder {
  VitConfig config;
  Tensor patch_kernel, patch_bias;  // [C, 3, p, p], [C]
  Tensor pos_embed;                 // [C, g, g] with g = image_size / patch
  std::vector<engine::AttentionBlock> blocks;
  Tensor norm_gamma, norm_beta;

  static VitEncoder create(const VitConfig& config, DType dtype, Rng& rng);
  void visit(const std::string& prefix, const engine::TensorVisitor& f);
  void collect(const std::string& prefix, ParamList& out) const { engine::append_params(*this, prefix, out); }
};

Representation encode_convnet(const Tensor& images, const ConvEncoder& encoder, EncodeCapture* capture = nullptr);
Representation encode_vit(const Tensor& images, const VitEncoder& encoder, EncodeCapture* capture = nullptr);

/// [B, C, h, w] -> [B, h*w, C], row-major over (h, w).
Tensor feature_map_to_tokens(const Tensor& map);

/// Global average pooling over tokens 'from'..N-1 of [B, N, C].
Tensor pool_tokens(const Tensor& tokens, std::int64_t from = 0);

}  // namespace mokd::models
