// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "models/encoders.hpp"

#include <cmath>

#include "engine/ops.hpp"

namespace mokd::models {

using namespace engine;
using engine::to_string;

const char* to_string(Arch arch) { return arch == Arch::Conv ? "conv" : "vit"; }

Arch parse_arch(const std::string& name) {
  if (name == "conv") return Arch::Conv;
  if (name == "vit") return Arch::Vit;
  throw Error(ErrorCode::Config, "unknown architecture '" + name + "' (expected conv or vit)");
}

namespace {

ConvLayer make_conv(std::int64_t in, std::int64_t out, int k, int stride, int padding, int groups, DType dtype,
                    Rng& rng) {
  if (groups < 1 || out % groups != 0) {
    throw Error(ErrorCode::Config, std::to_string(groups) + " norm groups do not divide width " + std::to_string(out));
  }
  ConvLayer l;
  l.kernel = kaiming_conv_param({out, in, k, k}, dtype, rng);
  l.bias = constant_param({out}, 0.0, dtype);
  l.gn_gamma = constant_param({out}, 1.0, dtype);
  l.gn_beta = constant_param({out}, 0.0, dtype);
  l.stride = stride;
  l.padding = padding;
  return l;
}

void visit_conv(ConvLayer& l, const std::string& prefix, const TensorVisitor& f) {
  f(prefix + "weight", l.kernel, true);
  f(prefix + "bias", l.bias, false);
  f(prefix + "norm.gamma", l.gn_gamma, false);
  f(prefix + "norm.beta", l.gn_beta, false);
}

// conv -> group norm, without activation.
Tensor conv_norm(const Tensor& x, const ConvLayer& l, int groups) {
  return group_norm(conv2d(x, l.kernel, l.bias, l.stride, l.padding), l.gn_gamma, l.gn_beta, groups);
}

void require_images(const Tensor& images, const char* who) {
  if (images.ndim() != 4 || images.dim(1) != 3) {
    throw Error(ErrorCode::Shape, std::string(who) + " expects images [B, 3, H, W], got " + to_string(images.shape()));
  }
}

}  // namespace

ConvEncoder ConvEncoder::create(const ConvConfig& config, DType dtype, Rng& rng) {
  if (config.widths.empty()) throw Error(ErrorCode::Config, "conv encoder needs at least one stage");
  ConvEncoder e;
  e.config = config;
  e.stem = make_conv(3, config.stem_width, 3, 1, 1, config.groups, dtype, rng);
  std::int64_t in = config.stem_width;
  for (auto w : config.widths) {
    ConvStage s;
    s.down = make_conv(in, w, 2, 2, 0, config.groups, dtype, rng);
    s.res_a = make_conv(w, w, 3, 1, 1, config.groups, dtype, rng);
    s.res_b = make_conv(w, w, 3, 1, 1, config.groups, dtype, rng);
    e.stages.push_back(std::move(s));
    in = w;
  }
  return e;
}

void ConvEncoder::visit(const std::string& prefix, const TensorVisitor& f) {
  visit_conv(stem, prefix + "stem.", f);
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string p = prefix + "stage" + std::to_string(i) + ".";
    visit_conv(stages[i].down, p + "down.", f);
    visit_conv(stages[i].res_a, p + "res_a.", f);
    visit_conv(stages[i].res_b, p + "res_b.", f);
  }
}

VitEncoder VitEncoder::create(const VitConfig& config, DType dtype, Rng& rng) {
  if (config.patch < 1 || config.image_size % config.patch != 0) {
    throw Error(ErrorCode::Config, "patch size " + std::to_string(config.patch) + " does not divide image size " +
                                       std::to_string(config.image_size));
  }
  const auto c = config.width;
  const auto grid = config.image_size / config.patch;
  VitEncoder e;
  e.config = config;
  e.patch_kernel = trunc_normal_param({c, 3, config.patch, config.patch}, 0.02, dtype, rng);
  e.patch_bias = constant_param({c}, 0.0, dtype);
  e.pos_embed = trunc_normal_param({c, grid, grid}, 0.02, dtype, rng);
  const auto hidden = static_cast<std::int64_t>(std::lround(config.mlp_ratio * static_cast<double>(c)));
  for (int i = 0; i < config.depth; ++i) e.blocks.push_back(AttentionBlock::create(c, config.heads, hidden, dtype, rng));
  e.norm_gamma = constant_param({c}, 1.0, dtype);
  e.norm_beta = constant_param({c}, 0.0, dtype);
  return e;
}

void VitEncoder::visit(const std::string& prefix, const TensorVisitor& f) {
  f(prefix + "patch.weight", patch_kernel, true);
  f(prefix + "patch.bias", patch_bias, false);
  f(prefix + "pos_embed", pos_embed, true);
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(prefix + "block" + std::to_string(i) + ".", f);
  f(prefix + "norm.gamma", norm_gamma, false);
  f(prefix + "norm.beta", norm_beta, false);
}

Tensor feature_map_to_tokens(const Tensor& map) {
  const auto B = map.dim(0), C = map.dim(1), H = map.dim(2), W = map.dim(3);
  return permute(reshape(map, {B, C, H * W}), {0, 2, 1});
}

Tensor pool_tokens(const Tensor& tokens, std::int64_t from) {
  if (from == 0) return mean_dim(tokens, 1);
  return mean_dim(narrow(tokens, 1, from, tokens.dim(1) - from), 1);
}

Representation encode_convnet(const Tensor& images, const ConvEncoder& encoder, EncodeCapture* capture) {
  require_images(images, "conv encoder");
  const int stride = encoder.total_stride();
  if (images.dim(2) % stride != 0 || images.dim(3) % stride != 0) {
    throw Error(ErrorCode::Config, "image " + std::to_string(images.dim(2)) + "x" + std::to_string(images.dim(3)) +
                                       " is not divisible by the encoder stride " + std::to_string(stride));
  }
  const int g = encoder.config.groups;
  Tensor x = relu(conv_norm(images, encoder.stem, g));
  for (const auto& s : encoder.stages) {
    x = relu(conv_norm(x, s.down, g));
    Tensor r = relu(conv_norm(x, s.res_a, g));
    x = relu(add(x, conv_norm(r, s.res_b, g)));
    if (capture) capture->feature_maps.push_back(x.detach());
  }
  Representation rep;
  rep.tokens = feature_map_to_tokens(x);
  rep.pooled = pool_tokens(rep.tokens);
  return rep;
}

Representation encode_vit(const Tensor& images, const VitEncoder& encoder, EncodeCapture* capture) {
  require_images(images, "vit encoder");
  const auto p = encoder.config.patch;
  if (images.dim(2) % p != 0 || images.dim(3) % p != 0) {
    throw Error(ErrorCode::Config, "patch size " + std::to_string(p) + " does not divide image " +
                                       std::to_string(images.dim(2)) + "x" + std::to_string(images.dim(3)));
  }
  const auto gh = images.dim(2) / p, gw = images.dim(3) / p, c = encoder.config.width;
  Tensor x = feature_map_to_tokens(conv2d(images, encoder.patch_kernel, encoder.patch_bias, static_cast<int>(p), 0));

  Tensor pos = encoder.pos_embed;
  if (pos.dim(1) != gh || pos.dim(2) != gw) pos = bilinear_resize(pos, gh, gw);
  x = add(x, transpose(reshape(pos, {c, gh * gw}), 0, 1));

  for (const auto& blk : encoder.blocks) {
    Tensor attn;
    x = self_attention_block(x, blk, capture ? &attn : nullptr);
    if (capture) capture->attention.push_back(attn);
  }
  Representation rep;
  rep.tokens = layer_norm(x, encoder.norm_gamma, encoder.norm_beta);
  rep.pooled = pool_tokens(rep.tokens);
  return rep;
}

}  // namespace mokd::models
