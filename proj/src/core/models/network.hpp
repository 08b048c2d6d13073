// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>

#include "models/encoders.hpp"
#include "models/heads.hpp"

namespace mokd::models {

/// One model of the pair: encoder, both heads, and the adapter that maps its
/// pooled feature into the partner's token width.
struct Network {
  NetworkConfig config;
  std::variant<ConvEncoder, VitEncoder> encoder;
  MlpHead mlp;
  THead thead;
  Adapter adapter;

  static Network create(const NetworkConfig& config, std::int64_t partner_channels, DType dtype, Rng& rng,
                        Rng& adapter_rng);

  std::int64_t channels() const { return config.channels(); }
  DType dtype() const;
  Representation encode(const Tensor& images, EncodeCapture* capture = nullptr) const;

  /// Trainable tensors (the adapter is fixed and excluded).
  void visit(const std::string& prefix, const engine::TensorVisitor& f);
  ParamList params(const std::string& prefix = "") const;
  /// Every tensor that defines the network, adapter included.
  ParamList state(const std::string& prefix = "") const;

  /// Deep copy whose tensors never record gradient edges.
  Network frozen_copy() const;
};

/// The two online networks and their momentum copies.
struct ModelPair {
  std::array<Network, 2> online;
  std::array<Network, 2> momentum;

  /// Momentum networks start as exact copies of the online ones.
  static ModelPair create(const NetworkConfig& first, const NetworkConfig& second, std::uint64_t seed,
                          DType dtype);
};

}  // namespace mokd::models
