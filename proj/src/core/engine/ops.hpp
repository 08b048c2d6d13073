// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "engine/tensor.hpp"

namespace mokd::engine {

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);                            // [m,k]x[k,n]
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);     // [B,m,k]x[B,k,n]
/// x[..., in] * weight[in, out] + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Elementwise. `b` is either the same shape as `a` or a suffix of it
// (broadcast over the leading dimensions).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// Reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean over one axis, which is removed from the shape.
Tensor mean_dim(const Tensor& x, int axis);
/// Sum over the last axis, which is removed from the shape.
Tensor sum_lastdim(const Tensor& x);

// Layout.
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& order);
Tensor transpose(const Tensor& x, int axis0, int axis1);
Tensor narrow(const Tensor& x, int axis, std::int64_t start, std::int64_t length);
Tensor concat(std::span<const Tensor> parts, int axis);

// Normalization and activations over the last axis.
/// softmax(x / temperature), max-subtracted.
Tensor softmax_lastdim(const Tensor& x, double temperature = 1.0);
/// log(softmax(x / temperature)) without forming the softmax.
Tensor log_softmax_lastdim(const Tensor& x, double temperature = 1.0);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);
/// x / max(||x||, eps) per last-axis slice.
Tensor l2_normalize_lastdim(const Tensor& x, double eps = 1e-12);

// Images, NCHW.
/// Cross-correlation. Output H' = (H + 2p - kh) / stride + 1, which must be exact.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int padding);
/// Per-sample normalization over channel groups with per-channel affine.
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups, double eps = 1e-5);
/// Bilinear resampling of the last two axes (half-pixel centers, edge clamp).
Tensor bilinear_resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w);

}  // namespace mokd::engine
