// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "engine/attention.hpp"

#include <cmath>

#include "engine/ops.hpp"

namespace mokd::engine {

AttentionBlock AttentionBlock::create(std::int64_t channels, int heads, std::int64_t hidden, DType dtype, Rng& rng) {
  if (heads < 1 || channels % heads != 0) {
    throw Error(ErrorCode::Config, std::to_string(heads) + " attention heads do not divide width " +
                                       std::to_string(channels));
  }
  AttentionBlock b;
  b.heads = heads;
  b.ln1_gamma = constant_param({channels}, 1.0, dtype);
  b.ln1_beta = constant_param({channels}, 0.0, dtype);
  b.qkv_weight = trunc_normal_param({channels, 3 * channels}, 0.02, dtype, rng);
  b.qkv_bias = constant_param({3 * channels}, 0.0, dtype);
  b.proj_weight = trunc_normal_param({channels, channels}, 0.02, dtype, rng);
  b.proj_bias = constant_param({channels}, 0.0, dtype);
  b.ln2_gamma = constant_param({channels}, 1.0, dtype);
  b.ln2_beta = constant_param({channels}, 0.0, dtype);
  b.fc1_weight = trunc_normal_param({channels, hidden}, 0.02, dtype, rng);
  b.fc1_bias = constant_param({hidden}, 0.0, dtype);
  b.fc2_weight = trunc_normal_param({hidden, channels}, 0.02, dtype, rng);
  b.fc2_bias = constant_param({channels}, 0.0, dtype);
  return b;
}

void AttentionBlock::visit(const std::string& prefix, const TensorVisitor& f) {
  f(prefix + "ln1.gamma", ln1_gamma, false);
  f(prefix + "ln1.beta", ln1_beta, false);
  f(prefix + "qkv.weight", qkv_weight, true);
  f(prefix + "qkv.bias", qkv_bias, false);
  f(prefix + "proj.weight", proj_weight, true);
  f(prefix + "proj.bias", proj_bias, false);
  f(prefix + "ln2.gamma", ln2_gamma, false);
  f(prefix + "ln2.beta", ln2_beta, false);
  f(prefix + "fc1.weight", fc1_weight, true);
  f(prefix + "fc1.bias", fc1_bias, false);
  f(prefix + "fc2.weight", fc2_weight, true);
  f(prefix + "fc2.bias", fc2_bias, false);
}

Tensor self_attention_block(const Tensor& tokens, const AttentionBlock& block, Tensor* attention) {
  if (tokens.ndim() != 3) throw Error(ErrorCode::Shape, "attention block expects [B, N, C], got " + to_string(tokens.shape()));
  const auto B = tokens.dim(0), N = tokens.dim(1), C = tokens.dim(2);
  if (C != block.channels()) throw Error(ErrorCode::Shape, "attention block width mismatch");
  const int H = block.heads;
  if (H < 1 || C % H != 0) throw Error(ErrorCode::Config, "attention heads do not divide width");
  const auto d = C / H;

  Tensor h = layer_norm(tokens, block.ln1_gamma, block.ln1_beta);
  Tensor qkv = linear(h, block.qkv_weight, block.qkv_bias);  // [B, N, 3C]
  // [B, N, 3, H, d] -> [3, B, H, N, d]
  qkv = permute(reshape(qkv, {B, N, 3, H, d}), {2, 0, 3, 1, 4});
  auto head_view = [&](int which) { return reshape(narrow(qkv, 0, which, 1), {B * H, N, d}); };
  Tensor q = head_view(0), k = head_view(1), v = head_view(2);

  Tensor scores = scale(bmm(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor attn = softmax_lastdim(scores);
  if (attention != nullptr) *attention = reshape(attn, {B, H, N, N}).detach();

  Tensor ctx = bmm(attn, v);  // [B*H, N, d]
  ctx = reshape(permute(reshape(ctx, {B, H, N, d}), {0, 2, 1, 3}), {B, N, C});
  Tensor x = add(tokens, linear(ctx, block.proj_weight, block.proj_bias));

  Tensor m = layer_norm(x, block.ln2_gamma, block.ln2_beta);
  m = linear(gelu(linear(m, block.fc1_weight, block.fc1_bias)), block.fc2_weight, block.fc2_bias);
  return add(x, m);
}

}  // namespace mokd::engine
