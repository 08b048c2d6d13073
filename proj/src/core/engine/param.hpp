// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "common/rng.hpp"
#include "engine/tensor.hpp"

namespace mokd::engine {

/// A named trainable tensor. `decay` marks weights that take weight decay
/// (matrices and kernels; biases and normalization affines do not).
struct ParamRef {
  std::string name;
  Tensor tensor;
  bool decay = true;
};

using ParamList = std::vector<ParamRef>;

/// Visits every tensor of a module by reference, so callers can both list and
/// rebind them (e.g. to build a detached copy).
using TensorVisitor = std::function<void(const std::string& name, Tensor& tensor, bool decay)>;

/// Appends the tensors of `module` (anything with a visit(prefix, visitor)
/// member) to `out`. The returned handles share storage with the module.
template <class Module>
void append_params(const Module& module, const std::string& prefix, ParamList& out) {
  Module view = module;  // shares tensor storage
  view.visit(prefix, [&](const std::string& name, Tensor& t, bool decay) { out.push_back({name, t, decay}); });
}

/// Normal(0, std) truncated to two standard deviations, as a trainable leaf.
Tensor trunc_normal_param(Shape shape, double std, DType dtype, Rng& rng);
/// He-normal for a conv kernel [F, C, kh, kw] (fan-out mode).
Tensor kaiming_conv_param(Shape shape, DType dtype, Rng& rng);
Tensor constant_param(Shape shape, double value, DType dtype);

void zero_grads(const ParamList& params);
std::int64_t count_elements(const ParamList& params);

}  // namespace mokd::engine
