// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "models/network.hpp"

#include "common/rng.hpp"

namespace mokd::models {

using namespace engine;

Network Network::create(const NetworkConfig& config, std::int64_t partner_channels, DType dtype, Rng& rng,
                        Rng& adapter_rng) {
  Network n;
  n.config = config;
  if (config.arch == Arch::Conv) {
    n.encoder = ConvEncoder::create(config.conv, dtype, rng);
  } else {
    n.encoder = VitEncoder::create(config.vit, dtype, rng);
  }
  n.mlp = MlpHead::create(config.channels(), config.head, dtype, rng);
  n.thead = THead::create(config.channels(), config.head, dtype, rng);
  n.adapter = Adapter::create(config.channels(), partner_channels, dtype, adapter_rng);
  return n;
}

DType Network::dtype() const { return mlp.last_v.dtype(); }

Representation Network::encode(const Tensor& images, EncodeCapture* capture) const {
  return std::visit(
      [&](const auto& enc) {
        if constexpr (std::is_same_v<std::decay_t<decltype(enc)>, ConvEncoder>) {
          return encode_convnet(images, enc, capture);
        } else {
          return encode_vit(images, enc, capture);
        }
      },
      encoder);
}

void Network::visit(const std::string& prefix, const TensorVisitor& f) {
  std::visit([&](auto& enc) { enc.visit(prefix + "encoder.", f); }, encoder);
  mlp.visit(prefix + "mlp.", f);
  thead.visit(prefix + "thead.", f);
}

ParamList Network::params(const std::string& prefix) const {
  ParamList out;
  append_params(*this, prefix, out);
  return out;
}

ParamList Network::state(const std::string& prefix) const {
  ParamList out = params(prefix);
  if (!adapter.identity()) out.push_back({prefix + "adapter.weight", adapter.weight, false});
  return out;
}

Network Network::frozen_copy() const {
  Network copy = *this;
  copy.visit("", [](const std::string&, Tensor& t, bool) { t = t.clone(); });
  if (!copy.adapter.identity()) copy.adapter.weight = copy.adapter.weight.clone();
  return copy;
}

ModelPair ModelPair::create(const NetworkConfig& first, const NetworkConfig& second, std::uint64_t seed,
                            DType dtype) {
  const std::array<const NetworkConfig*, 2> cfg{&first, &second};
  ModelPair pair;
  for (int i = 0; i < 2; ++i) {
    Rng rng = derive_rng(seed, {kStreamInit, static_cast<std::uint64_t>(i)});
    Rng adapter_rng = derive_rng(seed, {kStreamInit, 100 + static_cast<std::uint64_t>(i)});
    pair.online[i] = Network::create(*cfg[i], cfg[1 - i]->channels(), dtype, rng, adapter_rng);
    pair.momentum[i] = pair.online[i].frozen_copy();
  }
  return pair;
}

}  // namespace mokd::models
