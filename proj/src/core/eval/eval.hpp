// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "models/network.hpp"

namespace mokd::eval {

using engine::Tensor;

/// Pooled encoder features with their labels. Rows are unit length when
/// `normalized` is set.
struct FeatureBank {
  Tensor features;  // [n, C]
  std::vector<std::int32_t> labels;
  int classes = 0;
  bool normalized = false;
  std::string tag;

  std::size_t size() const { return labels.size(); }
};

/// Encodes every image at `side` x `side` (deterministic resize, no
/// augmentation) in batches, without recording gradients.
FeatureBank extract_features(const models::Network& model, const data::LabeledDataset& data, bool normalize,
                             int side = 32, std::size_t batch = 128, const std::string& tag = "");

/// FNV-1a over every parameter byte; used to show evaluation is read-only.
std::uint64_t parameter_hash(const models::Network& model);

inline constexpr double kKnnTemperature = 0.07;

struct KnnResult {
  std::vector<int> ks;
  std::vector<double> accuracy;                  // per k, in [0, 1]
  std::vector<std::vector<std::int32_t>> predictions;  // per k, per test sample
  int best_k = 0;
  double best_accuracy = 0.0;
};

/// Cosine-similarity weighted kNN. Neighbours rank by similarity (ties to
/// the lower train index); each votes exp(sim / temperature) for its class
/// and the prediction is the highest total, ties to the smallest class id.
/// The best k is the first with the highest accuracy.
KnnResult knn_evaluate(const FeatureBank& train, const FeatureBank& test, const std::vector<int>& ks,
                       double temperature = kKnnTemperature);

struct LinearProbeConfig {
  int epochs = 100;
  double lr = 0.1;
  double momentum = 0.9;
  std::size_t batch = 256;
  std::uint64_t seed = 0;
};

struct LinearProbeResult {
  double accuracy = 0.0;
  Tensor weight;  // [classes, C]
  Tensor bias;    // [classes]
  std::vector<std::int32_t> predictions;
};

/// One linear layer on frozen raw features: softmax cross-entropy, SGD with
/// momentum and a cosine learning-rate schedule, no weight decay.
LinearProbeResult linear_probe(const FeatureBank& train, const FeatureBank& test, const LinearProbeConfig& config);

/// Per-head mean distance for attention [B, H, N, N] over an h x w grid of
/// cells `cell` pixels wide: sum_k attn(q, k) * |pos(q) - pos(k)| averaged
/// over queries and batch. Returns H values.
std::vector<double> attention_distance(const Tensor& attention, std::int64_t grid_h, std::int64_t grid_w, double cell);

/// Row-softmaxed cosine similarity between spatial positions of a feature
/// map [B, C, h, w], returned as [B, 1, N, N]. Stands in for attention when
/// the encoder has none.
Tensor pseudo_attention(const Tensor& feature_map, double temperature);

inline constexpr double kPseudoAttentionTemperature = 0.1;

struct MadReport {
  std::string kind;  // "attention" or "cosine pseudo-attention"
  std::vector<std::vector<double>> per_head;  // [layer][head]
  std::vector<double> per_layer;              // mean over heads
  std::vector<double> cell_pixels;            // per layer
};

/// Mean attention distance per layer of a transformer encoder, or per stage
/// of a conv encoder through pseudo_attention.
MadReport mean_attention_distance(const models::Network& model, const Tensor& images,
                                  double pseudo_temperature = kPseudoAttentionTemperature);

/// Fraction of positions where the two prediction vectors agree.
double prediction_consistency(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b);

/// Writes `path` as little-endian float32 rows and `path`.txt with
/// rows, cols, tag, normalized flag and one label per line after a blank line.
void export_embeddings(const FeatureBank& bank, const std::filesystem::path& path);

}  // namespace mokd::eval
