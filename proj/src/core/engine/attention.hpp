// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "common/rng.hpp"
#include "engine/param.hpp"
#include "engine/tensor.hpp"

namespace mokd::engine {

/// Pre-norm transformer block: x + Proj(MHSA(LN(x))), then x + MLP(LN(x)).
struct AttentionBlock {
  int heads = 1;
  Tensor ln1_gamma, ln1_beta;
  Tensor qkv_weight, qkv_bias;    // [C, 3C], [3C]; q | k | v along the output axis
  Tensor proj_weight, proj_bias;  // [C, C], [C]
  Tensor ln2_gamma, ln2_beta;
  Tensor fc1_weight, fc1_bias;    // [C, hidden]
  Tensor fc2_weight, fc2_bias;    // [hidden, C]

  static AttentionBlock create(std::int64_t channels, int heads, std::int64_t hidden, DType dtype, Rng& rng);

  std::int64_t channels() const { return qkv_weight.dim(0); }
  void visit(const std::string& prefix, const TensorVisitor& f);
  void collect(const std::string& prefix, ParamList& out) const { append_params(*this, prefix, out); }
};

/// Applies one block to tokens [B, N, C]. When `attention` is non-null it
/// receives the detached attention weights [B, heads, N, N].
Tensor self_attention_block(const Tensor& tokens, const AttentionBlock& block, Tensor* attention = nullptr);

}  // namespace mokd::engine
