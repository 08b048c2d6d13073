// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "schedules/optimizer.hpp"

#include <cmath>

namespace mokd::schedules {

using namespace engine;

const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adamw"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adamw") return OptimizerKind::AdamW;
  throw Error(ErrorCode::Config, "unknown optimizer '" + name + "' (expected sgd or adamw)");
}

Optimizer::Optimizer(const OptimizerConfig& config, ParamList params) : config_(config), params_(std::move(params)) {
  for (const auto& p : params_) {
    first_.push_back(Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
    if (config_.kind == OptimizerKind::AdamW) second_.push_back(Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
  }
}

ParamList Optimizer::state() const {
  ParamList out;
  const char* a = config_.kind == OptimizerKind::Sgd ? ".velocity" : ".m";
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({params_[i].name + a, first_[i], false});
    if (!second_.empty()) out.push_back({params_[i].name + ".v", second_[i], false});
  }
  return out;
}

void Optimizer::step(double lr) {
  double norm_sq = 0.0;
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    Tensor g = p.tensor.grad();
    if (!all_finite(g)) throw Error(ErrorCode::Numeric, "non-finite gradient in " + p.name + "; step aborted");
    for (double v : g.to_vector()) norm_sq += v * v;
  }
  double clip = 1.0;
  if (config_.clip_norm > 0.0) {
    const double norm = std::sqrt(norm_sq);
    if (norm > config_.clip_norm) clip = config_.clip_norm / (norm + 1e-6);
  }

  ++steps_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor w = params_[i].tensor;
    if (!w.has_grad()) continue;
    const double wd = params_[i].decay ? config_.weight_decay : 0.0;
    dispatch(w.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto wv = w.mutable_data<T>();
      auto gv = std::get<std::vector<T>>(*w.grad_buffer());
      auto m = first_[i].mutable_data<T>();
      const T c = static_cast<T>(clip), tl = static_cast<T>(lr), twd = static_cast<T>(wd);
      if (config_.kind == OptimizerKind::Sgd) {
        const T mu = static_cast<T>(config_.momentum);
        for (std::size_t k = 0; k < wv.size(); ++k) {
          const T g = gv[k] * c + twd * wv[k];
          m[k] = mu * m[k] + g;
          wv[k] -= tl * m[k];
        }
      } else {
        auto v = second_[i].mutable_data<T>();
        const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
        const T eps = static_cast<T>(config_.eps);
        const T bc1 = static_cast<T>(1.0 - std::pow(config_.beta1, static_cast<double>(steps_)));
        const T bc2 = static_cast<T>(1.0 - std::pow(config_.beta2, static_cast<double>(steps_)));
        const T decay = static_cast<T>(1.0 - lr * wd);
        for (std::size_t k = 0; k < wv.size(); ++k) {
          const T g = gv[k] * c;
          m[k] = b1 * m[k] + (T(1) - b1) * g;
          v[k] = b2 * v[k] + (T(1) - b2) * g * g;
          wv[k] *= decay;
          wv[k] -= tl * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps);
        }
      }
    });
    w.zero_grad();
  }
}

}  // namespace mokd::schedules
