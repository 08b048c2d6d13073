// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "models/heads.hpp"

#include <cmath>
#include <random>

#include "engine/ops.hpp"
#include "models/encoders.hpp"

namespace mokd::models {

using namespace engine;
using engine::to_string;

namespace {

std::int64_t scaled(double ratio, std::int64_t width) {
  return static_cast<std::int64_t>(std::lround(ratio * static_cast<double>(width)));
}

Tensor run_blocks(Tensor x, const THead& head, std::vector<Tensor>* attention) {
  for (const auto& blk : head.blocks) {
    Tensor attn;
    x = self_attention_block(x, blk, attention ? &attn : nullptr);
    if (attention) attention->push_back(attn);
  }
  return x;
}

Tensor project_in(const Tensor& tokens, const THead& head) {
  if (tokens.dim(-1) != head.in_channels()) {
    throw Error(ErrorCode::Shape, "T-Head expects width " + std::to_string(head.in_channels()) + ", got " +
                                      to_string(tokens.shape()));
  }
  return head.in_weight.defined() ? linear(tokens, head.in_weight, head.in_bias) : tokens;
}

Tensor project_out(const Tensor& pooled, const THead& head) {
  return weight_normalized_projection(l2_normalize_lastdim(pooled), head.last_v);
}

}  // namespace

MlpHead MlpHead::create(std::int64_t in, const HeadConfig& c, DType dtype, Rng& rng) {
  MlpHead h;
  h.fc1_weight = trunc_normal_param({in, c.hidden}, 0.02, dtype, rng);
  h.fc1_bias = constant_param({c.hidden}, 0.0, dtype);
  h.fc2_weight = trunc_normal_param({c.hidden, c.hidden}, 0.02, dtype, rng);
  h.fc2_bias = constant_param({c.hidden}, 0.0, dtype);
  h.fc3_weight = trunc_normal_param({c.hidden, c.bottleneck}, 0.02, dtype, rng);
  h.fc3_bias = constant_param({c.bottleneck}, 0.0, dtype);
  h.last_v = trunc_normal_param({c.out_dim, c.bottleneck}, 0.02, dtype, rng);
  return h;
}

void MlpHead::visit(const std::string& prefix, const TensorVisitor& f) {
  f(prefix + "fc1.weight", fc1_weight, true);
  f(prefix + "fc1.bias", fc1_bias, false);
  f(prefix + "fc2.weight", fc2_weight, true);
  f(prefix + "fc2.bias", fc2_bias, false);
  f(prefix + "fc3.weight", fc3_weight, true);
  f(prefix + "fc3.bias", fc3_bias, false);
  f(prefix + "last.v", last_v, true);
}

THead THead::create(std::int64_t in, const HeadConfig& c, DType dtype, Rng& rng) {
  if (c.t_depth < 1) throw Error(ErrorCode::Config, "T-Head depth must be at least 1");
  THead h;
  if (in != c.t_width) {
    h.in_weight = trunc_normal_param({in, c.t_width}, 0.02, dtype, rng);
    h.in_bias = constant_param({c.t_width}, 0.0, dtype);
  }
  for (int i = 0; i < c.t_depth; ++i) {
    h.blocks.push_back(AttentionBlock::create(c.t_width, c.t_heads, scaled(c.t_mlp_ratio, c.t_width), dtype, rng));
  }
  h.last_v = trunc_normal_param({c.out_dim, c.t_width}, 0.02, dtype, rng);
  return h;
}

std::int64_t THead::in_channels() const { return in_weight.defined() ? in_weight.dim(0) : blocks.front().channels(); }

void THead::visit(const std::string& prefix, const TensorVisitor& f) {
  if (in_weight.defined()) {
    f(prefix + "in.weight", in_weight, true);
    f(prefix + "in.bias", in_bias, false);
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(prefix + "block" + std::to_string(i) + ".", f);
  f(prefix + "last.v", last_v, true);
}

Adapter Adapter::create(std::int64_t in, std::int64_t out, DType dtype, Rng& rng) {
  Adapter a;
  a.in = in;
  a.out = out;
  if (in == out) return a;
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  std::vector<double> w(static_cast<std::size_t>(in * out));
  for (double& v : w) v = normal(rng);
  a.weight = Tensor::from_values({in, out}, w, dtype);
  return a;
}

Tensor Adapter::apply(const Tensor& pooled) const {
  if (pooled.dim(-1) != in) {
    throw Error(ErrorCode::Shape, "adapter expects width " + std::to_string(in) + ", got " + to_string(pooled.shape()));
  }
  return identity() ? pooled : linear(pooled, weight, Tensor{});
}

Tensor weight_normalized_projection(const Tensor& x, const Tensor& v) {
  return linear(x, transpose(l2_normalize_lastdim(v), 0, 1), Tensor{});
}

Tensor mlp_head_forward(const Tensor& pooled, const MlpHead& head, Tensor* bottleneck) {
  if (pooled.dim(-1) != head.fc1_weight.dim(0)) {
    throw Error(ErrorCode::Shape, "MLP head expects width " + std::to_string(head.fc1_weight.dim(0)) + ", got " +
                                      to_string(pooled.shape()));
  }
  Tensor x = gelu(linear(pooled, head.fc1_weight, head.fc1_bias));
  x = gelu(linear(x, head.fc2_weight, head.fc2_bias));
  x = l2_normalize_lastdim(linear(x, head.fc3_weight, head.fc3_bias));
  if (bottleneck) *bottleneck = x.detach();
  return weight_normalized_projection(x, head.last_v);
}

Tensor t_head_self_forward(const Tensor& tokens, const THead& head, std::vector<Tensor>* attention) {
  if (tokens.ndim() != 3) throw Error(ErrorCode::Shape, "T-Head expects tokens [B, N, C]");
  Tensor x = run_blocks(project_in(tokens, head), head, attention);
  return project_out(pool_tokens(x), head);
}

Tensor t_head_search_forward(const Tensor& query, const Tensor& partner_tokens, const THead& partner_head,
                             const Adapter& adapter, SearchOptions options, std::vector<Tensor>* attention) {
  if (partner_tokens.ndim() != 3 || query.ndim() != 2 || query.dim(0) != partner_tokens.dim(0)) {
    throw Error(ErrorCode::Shape, "search expects query [B, C_q] and partner tokens [B, N, C], got " +
                                      to_string(query.shape()) + " and " + to_string(partner_tokens.shape()));
  }
  const auto B = partner_tokens.dim(0), C = partner_tokens.dim(2);
  if (adapter.identity() && query.dim(1) != C) {
    throw Error(ErrorCode::Config, "no adapter from query width " + std::to_string(query.dim(1)) +
                                       " to partner width " + std::to_string(C));
  }
  if (adapter.out != C) throw Error(ErrorCode::Config, "adapter output width does not match partner tokens");
  Tensor q = adapter.apply(options.query_grad ? query : query.detach());
  const Tensor parts[] = {reshape(q, {B, 1, C}), partner_tokens};
  Tensor seq = run_blocks(project_in(concat(parts, 1), partner_head), partner_head, attention);
  return project_out(pool_tokens(seq, 1), partner_head);
}

}  // namespace mokd::models
