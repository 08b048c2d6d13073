// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "engine/param.hpp"

#include <cmath>
#include <random>

namespace mokd::engine {

Tensor trunc_normal_param(Shape shape, double std, DType dtype, Rng& rng) {
  Tensor t = make_tensor(std::move(shape), dtype);
  std::normal_distribution<double> normal(0.0, 1.0);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : t.mutable_data<T>()) {
      double z = normal(rng);
      while (std::abs(z) > 2.0) z = normal(rng);
      v = static_cast<T>(z * std);
    }
  });
  t.set_requires_grad(true);
  return t;
}

Tensor kaiming_conv_param(Shape shape, DType dtype, Rng& rng) {
  const double fan_out = static_cast<double>(shape.at(0) * shape.at(2) * shape.at(3));
  Tensor t = make_tensor(std::move(shape), dtype);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_out));
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : t.mutable_data<T>()) v = static_cast<T>(normal(rng));
  });
  t.set_requires_grad(true);
  return t;
}

Tensor constant_param(Shape shape, double value, DType dtype) {
  Tensor t = Tensor::full(std::move(shape), value, dtype);
  t.set_requires_grad(true);
  return t;
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) p.tensor.impl()->grad.reset();
}

std::int64_t count_elements(const ParamList& params) {
  std::int64_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

}  // namespace mokd::engine
