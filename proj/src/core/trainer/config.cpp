// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainer/config.hpp"

#include <sstream>

#include "common/error.hpp"

namespace mokd::trainer {

ModelSpec default_model(models::Arch arch, double lambda) {
  ModelSpec m;
  m.network.arch = arch;
  m.lambda = lambda;
  m.optimizer.clip_norm = 3.0;
  if (arch == models::Arch::Conv) {
    m.optimizer.kind = schedules::OptimizerKind::Sgd;
    m.optimizer.weight_decay = 1e-4;
    m.base_lr = 0.1;
  } else {
    m.optimizer.kind = schedules::OptimizerKind::AdamW;
    m.optimizer.weight_decay = 0.04;
    m.base_lr = 3e-4;
  }
  return m;
}

TrainConfig default_config() {
  TrainConfig c;
  c.models = {default_model(models::Arch::Conv, 0.1), default_model(models::Arch::Vit, 1.0)};
  return c;
}

namespace {

void require(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw Error(ErrorCode::Config, key + ": " + rule);
}

void validate_network(const models::NetworkConfig& n, const std::string& p) {
  const auto& h = n.head;
  require(h.hidden >= 1, p + "head.hidden", "must be >= 1");
  require(h.bottleneck >= 1, p + "head.bottleneck", "must be >= 1");
  require(h.out_dim >= 2, p + "head.out_dim", "must be >= 2");
  require(h.t_width >= 1 && h.t_heads >= 1 && h.t_width % h.t_heads == 0, p + "head.t_width",
          "must be a positive multiple of head.t_heads");
  require(h.t_depth >= 1, p + "head.t_depth", "must be >= 1");
  require(h.t_mlp_ratio >= 1, p + "head.t_mlp_ratio", "must be >= 1");
  if (n.arch == models::Arch::Conv) {
    require(n.conv.stem_width >= 1, p + "conv.stem_width", "must be >= 1");
    require(!n.conv.widths.empty(), p + "conv.widths", "needs at least one stage");
    for (auto w : n.conv.widths) require(w >= 1 && w % n.conv.groups == 0, p + "conv.widths", "must be multiples of conv.groups");
    require(n.conv.stem_width % n.conv.groups == 0, p + "conv.stem_width", "must be a multiple of conv.groups");
  } else {
    require(n.vit.patch >= 1, p + "vit.patch", "must be >= 1");
    require(n.vit.image_size % n.vit.patch == 0, p + "vit.image_size", "must be divisible by vit.patch");
    require(n.vit.width >= 1 && n.vit.heads >= 1 && n.vit.width % n.vit.heads == 0, p + "vit.width",
            "must be a positive multiple of vit.heads");
    require(n.vit.depth >= 1, p + "vit.depth", "must be >= 1");
    require(n.vit.mlp_ratio >= 1, p + "vit.mlp_ratio", "must be >= 1");
  }
}

}  // namespace

void validate(const TrainConfig& c) {
  for (int i = 0; i < 2; ++i) {
    const std::string p = "model" + std::to_string(i + 1) + ".";
    const auto& m = c.models[static_cast<std::size_t>(i)];
    validate_network(m.network, p);
    require(m.lambda >= 0.0 && m.lambda <= 1.0, p + "lambda", "must lie in [0, 1]");
    require(m.base_lr > 0.0 && m.base_lr <= 10.0, p + "lr", "must lie in (0, 10]");
    require(m.optimizer.weight_decay >= 0.0 && m.optimizer.weight_decay < 1.0, p + "weight_decay", "must lie in [0, 1)");
    require(m.optimizer.momentum >= 0.0 && m.optimizer.momentum < 1.0, p + "momentum", "must lie in [0, 1)");
    require(m.optimizer.clip_norm >= 0.0, p + "clip_norm", "must be >= 0");
  }
  if (c.models[0].network.head.out_dim != c.models[1].network.head.out_dim) {
    throw Error(ErrorCode::Config, "model2.head.out_dim: both models need the same output dimension K");
  }
  require(c.student_tau > 0.0 && c.student_tau <= 10.0, "loss.student_tau", "must lie in (0, 10]");
  require(c.teacher_tau_start > 0.0 && c.teacher_tau_start <= 10.0, "loss.teacher_tau_start", "must lie in (0, 10]");
  require(c.teacher_tau > 0.0 && c.teacher_tau <= 10.0, "loss.teacher_tau", "must lie in (0, 10]");
  require(c.teacher_tau_ramp_epochs >= 0, "loss.teacher_tau_ramp_epochs", "must be >= 0");
  require(c.center_momentum >= 0.0 && c.center_momentum <= 1.0, "loss.center_momentum", "must lie in [0, 1]");
  require(c.ema_base >= 0.0 && c.ema_base <= 1.0, "schedule.ema_base", "must lie in [0, 1]");
  require(c.warmup_epochs >= 0, "schedule.warmup_epochs", "must be >= 0");
  require(c.warmup_epochs < c.epochs, "schedule.warmup_epochs", "must be smaller than run.epochs");
  require(c.min_lr >= 0.0, "schedule.min_lr", "must be >= 0");
  const auto& a = c.augment;
  require(a.global.count >= 2, "data.global_crops", "needs at least 2 global views");
  require(a.local.count >= 0, "data.local_crops", "must be >= 0");
  require(a.global.size >= 1 && a.local.size >= 1, "data.global_size", "crop sizes must be >= 1");
  for (const auto* s : {&a.global, &a.local}) {
    require(s->scale_min > 0.0 && s->scale_min <= s->scale_max && s->scale_max <= 1.0, "data.scale",
            "crop scales need 0 < min <= max <= 1");
  }
  require(c.batch_size >= 1, "run.batch_size", "must be >= 1");
  require(c.epochs >= 1, "run.epochs", "must be >= 1");
  require(c.workers >= 1 && c.workers <= 256, "run.workers", "must lie in [1, 256]");
  require(c.checkpoint_every >= 0, "run.checkpoint_every", "must be >= 0");
  require(c.audit_every >= 0, "run.audit_every", "must be >= 0");
}

std::string canonical_text(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  for (int i = 0; i < 2; ++i) {
    const auto& m = c.models[static_cast<std::size_t>(i)];
    const auto& n = m.network;
    os << "model" << i << " arch=" << models::to_string(n.arch) << " conv=" << n.conv.stem_width << '/';
    for (auto w : n.conv.widths) os << w << ',';
    os << n.conv.groups << " vit=" << n.vit.image_size << ',' << n.vit.patch << ',' << n.vit.width << ','
       << n.vit.depth << ',' << n.vit.heads << ',' << n.vit.mlp_ratio << " head=" << n.head.hidden << ','
       << n.head.bottleneck << ',' << n.head.out_dim << ',' << n.head.t_width << ',' << n.head.t_heads << ','
       << n.head.t_depth << ',' << n.head.t_mlp_ratio << " opt=" << schedules::to_string(m.optimizer.kind) << ','
       << m.optimizer.weight_decay << ',' << m.optimizer.momentum << ',' << m.optimizer.beta1 << ','
       << m.optimizer.beta2 << ',' << m.optimizer.eps << ',' << m.optimizer.clip_norm << " lr=" << m.base_lr
       << " lambda=" << m.lambda << '\n';
  }
  const auto& a = c.augment;
  os << "t_branch=" << c.t_branch << " query_grad=" << c.search_query_grad << " tau=" << c.student_tau << ','
     << c.teacher_tau_start << ',' << c.teacher_tau << ',' << c.teacher_tau_ramp_epochs << " center=" << c.center_momentum
     << " ema=" << c.ema_base << " warmup=" << c.warmup_epochs << " min_lr=" << c.min_lr << '\n'
     << "crops=" << a.global.count << ',' << a.global.size << ',' << a.global.scale_min << ',' << a.global.scale_max
     << ';' << a.local.count << ',' << a.local.size << ',' << a.local.scale_min << ',' << a.local.scale_max
     << " photo=" << a.flip_prob << ',' << a.jitter_prob << ',' << a.brightness << ',' << a.contrast << ','
     << a.saturation << ',' << a.hue << ',' << a.grayscale_prob << ',' << a.blur_prob_first << ','
     << a.blur_prob_other << ',' << a.blur_sigma_min << ',' << a.blur_sigma_max << ',' << a.normalize << '\n'
     << "batch=" << c.batch_size << " epochs=" << c.epochs << " steps=" << c.steps_per_epoch << " seed=" << c.seed
     << " dtype=" << engine::to_string(c.dtype) << '\n';
  return os.str();
}

std::uint64_t config_hash(const TrainConfig& c) {
  // FNV-1a, 64-bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_text(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mokd::trainer
