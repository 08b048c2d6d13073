// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "engine/tensor.hpp"

namespace mokd::engine {

struct GradCheckOptions {
  /// Denominator floor of the relative error, so exactly-zero gradients do
  /// not turn rounding noise into a failure.
  double abs_floor = 1e-5;
  /// Number of coordinates to probe, drawn uniformly over all inputs; 0 = all.
  std::size_t sample = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  bool pass = false;
};

using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

/// Compares the reverse-mode gradient of `fn` at `point` against central
/// differences with step cbrt(eps) * max(1, |x|). Never throws on mismatch.
/// `point` should be 64-bit; a 32-bit check is not meaningful.
GradCheckReport grad_check(const ScalarFn& fn, std::span<const Tensor> point, double tolerance,
                           const GradCheckOptions& options = {});

/// Variant for functions whose inputs live elsewhere (e.g. model parameters):
/// `targets` are perturbed in place and restored afterwards.
GradCheckReport grad_check_inplace(const std::function<Tensor()>& fn, std::span<const Tensor> targets,
                                   double tolerance, const GradCheckOptions& options = {});

}  // namespace mokd::engine
