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

/// Three-layer GELU MLP into an L2-normalized bottleneck, then a
/// weight-normalized linear layer (unit-norm rows, gain fixed at 1) to K.
struct MlpHead {
  Tensor fc1_weight, fc1_bias;  // [C, hidden]
  Tensor fc2_weight, fc2_bias;  // [hidden, hidden]
  Tensor fc3_weight, fc3_bias;  // [hidden, bottleneck]
  Tensor last_v;                // [K, bottleneck]; direction only

  static MlpHead create(std::int64_t in, const HeadConfig& config, DType dtype, Rng& rng);
  void visit(const std::string& prefix, const engine::TensorVisitor& f);
  void collect(const std::string& prefix, ParamList& out) const { engine::append_params(*this, prefix, out); }
};

/// Transformer blocks over a token set, average pooled, L2-normalized and
/// projected to K by a weight-normalized layer shaped like MlpHead's last one.
struct THead {
  Tensor in_weight, in_bias;  // [C, width]; undefined when C == width
  std::vector<engine::AttentionBlock> blocks;
  Tensor last_v;  // [K, width]

  static THead create(std::int64_t in, const HeadConfig& config, DType dtype, Rng& rng);
  std::int64_t in_channels() const;
  void visit(const std::string& prefix, const engine::TensorVisitor& f);
  void collect(const std::string& prefix, ParamList& out) const { engine::append_params(*this, prefix, out); }
};

/// Maps a pooled feature of width C_q to the partner encoder's width C.
/// Identity when the widths agree; otherwise a fixed seeded random linear map
/// that no loss trains.
struct Adapter {
  std::int64_t in = 0, out = 0;
  Tensor weight;  // [in, out], never requires grad

  static Adapter create(std::int64_t in, std::int64_t out, DType dtype, Rng& rng);
  bool identity() const { return !weight.defined(); }
  Tensor apply(const Tensor& pooled) const;
};

/// x [..., D] times the row-normalized v [K, D] transposed.
Tensor weight_normalized_projection(const Tensor& x, const Tensor& v);

/// pooled [B, C] -> logits [B, K]. `bottleneck` receives the normalized
/// bottleneck activations when non-null.
Tensor mlp_head_forward(const Tensor& pooled, const MlpHead& head, Tensor* bottleneck = nullptr);

/// tokens [B, N, C] -> logits [B, K]. `attention` receives per-block maps.
Tensor t_head_self_forward(const Tensor& tokens, const THead& head, std::vector<Tensor>* attention = nullptr);

struct SearchOptions {
  bool query_grad = false;  // let gradient reach the query path
};

/// Cross-attention feature search: the adapted query [B, C_q] is prepended as
/// token 0 to the partner tokens [B, N, C], the sequence runs through the
/// partner head's blocks, and only tokens 1..N are pooled and projected.
Tensor t_head_search_forward(const Tensor& query, const Tensor& partner_tokens, const THead& partner_head,
                             const Adapter& adapter, SearchOptions options = {},
                             std::vector<Tensor>* attention = nullptr);

}  // namespace mokd::models
