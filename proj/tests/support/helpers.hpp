// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>

#include "common/rng.hpp"
#include "engine/ops.hpp"
#include "engine/tensor.hpp"

namespace testing_support {

using mokd::engine::DType;
using mokd::engine::Shape;
using mokd::engine::Tensor;

inline Tensor randn(Shape shape, mokd::Rng& rng, double scale = 1.0, DType dtype = DType::F64) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(static_cast<std::size_t>(mokd::engine::numel(shape)));
  for (double& x : v) x = n(rng);
  return Tensor::from_values(std::move(shape), v, dtype);
}

inline Tensor uniform(Shape shape, mokd::Rng& rng, double lo, double hi, DType dtype = DType::F64) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(mokd::engine::numel(shape)));
  for (double& x : v) x = u(rng);
  return Tensor::from_values(std::move(shape), v, dtype);
}

/// sum(y * w): a scalar probe whose gradient exercises every output entry.
inline Tensor probe(const Tensor& y, const Tensor& w) { return mokd::engine::sum(mokd::engine::mul(y, w)); }

/// Exact elementwise equality (no tolerance).
inline bool exactly_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) return false;
  return *a.values_ptr() == *b.values_ptr();
}

}  // namespace testing_support
