// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "data/augment.hpp"
#include "engine/ops.hpp"
#include "schedules/optimizer.hpp"
#include "schedules/schedule.hpp"

namespace mokd::eval {

using namespace engine;
using engine::to_string;

FeatureBank extract_features(const models::Network& model, const data::LabeledDataset& data, bool normalize,
                             int side, std::size_t batch, const std::string& tag) {
  if (data.size() == 0) throw Error(ErrorCode::Usage, "cannot extract features from an empty dataset");
  if (batch == 0) throw Error(ErrorCode::Usage, "feature batch size must be positive");
  NoGradGuard no_grad;
  std::vector<Tensor> parts;
  for (std::size_t begin = 0; begin < data.size(); begin += batch) {
    const std::size_t end = std::min(data.size(), begin + batch);
    Tensor pooled = model.encode(data::eval_batch(data, begin, end, side, model.dtype())).pooled;
    parts.push_back(normalize ? l2_normalize_lastdim(pooled) : pooled);
  }
  FeatureBank bank;
  bank.features = parts.size() == 1 ? parts[0].detach() : concat(parts, 0).detach();
  bank.labels = data.labels;
  bank.classes = data.classes;
  bank.normalized = normalize;
  bank.tag = tag;
  return bank;
}

std::uint64_t parameter_hash(const models::Network& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : model.state()) {
    mix(p.name.data(), p.name.size());
    std::visit([&](const auto& v) { mix(v.data(), v.size() * sizeof(v[0])); }, *p.tensor.values_ptr());
  }
  return h;
}

namespace {

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  const auto v = t.to_vector();
  const auto c = static_cast<std::size_t>(t.dim(1));
  std::vector<std::vector<double>> out(static_cast<std::size_t>(t.dim(0)), std::vector<double>(c));
  for (std::size_t i = 0; i < v.size(); ++i) out[i / c][i % c] = v[i];
  return out;
}

void check_bank(const FeatureBank& b, const char* what) {
  if (b.size() == 0 || !b.features.defined()) throw Error(ErrorCode::Usage, std::string(what) + " feature bank is empty");
  if (b.features.ndim() != 2 || b.features.dim(0) != static_cast<std::int64_t>(b.size())) {
    throw Error(ErrorCode::Shape, std::string(what) + " bank features " + to_string(b.features.shape()) +
                                      " do not match " + std::to_string(b.size()) + " labels");
  }
  for (auto l : b.labels)
    if (l < 0) throw Error(ErrorCode::Usage, std::string(what) + " bank has a negative label");
}

int class_count(const FeatureBank& a, const FeatureBank& b) {
  int n = std::max(a.classes, b.classes);
  for (const auto* bank : {&a, &b})
    for (auto l : bank->labels) n = std::max(n, l + 1);
  return n;
}

std::int32_t argmax_first(const std::vector<double>& v) {
  return static_cast<std::int32_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

KnnResult knn_evaluate(const FeatureBank& train, const FeatureBank& test, const std::vector<int>& ks,
                       double temperature) {
  check_bank(train, "train");
  check_bank(test, "test");
  if (!train.normalized || !test.normalized) throw Error(ErrorCode::Usage, "kNN needs L2-normalized feature banks");
  if (train.features.dim(1) != test.features.dim(1)) throw Error(ErrorCode::Shape, "train and test feature widths differ");
  if (ks.empty()) throw Error(ErrorCode::Usage, "no k values given");
  if (!(temperature > 0)) throw Error(ErrorCode::Parameter, "kNN temperature must be positive");
  for (int k : ks) {
    if (k < 1 || static_cast<std::size_t>(k) > train.size()) {
      throw Error(ErrorCode::Usage, "k=" + std::to_string(k) + " outside [1, " + std::to_string(train.size()) + "]");
    }
  }
  const auto tr = rows_of(train.features), te = rows_of(test.features);
  const int classes = class_count(train, test);
  const auto kmax = static_cast<std::size_t>(*std::max_element(ks.begin(), ks.end()));

  KnnResult r;
  r.ks = ks;
  r.predictions.assign(ks.size(), std::vector<std::int32_t>(te.size()));
  std::vector<double> sims(tr.size());
  std::vector<std::size_t> order(tr.size());
  for (std::size_t q = 0; q < te.size(); ++q) {
    for (std::size_t j = 0; j < tr.size(); ++j) {
      double s = 0;
      for (std::size_t c = 0; c < te[q].size(); ++c) s += te[q][c] * tr[j][c];
      sims[j] = s;
    }
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kmax), order.end(),
                      [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); });
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      std::vector<double> votes(static_cast<std::size_t>(classes), 0.0);
      for (std::size_t n = 0; n < static_cast<std::size_t>(ks[ki]); ++n) {
        votes[static_cast<std::size_t>(train.labels[order[n]])] += std::exp(sims[order[n]] / temperature);
      }
      r.predictions[ki][q] = argmax_first(votes);
    }
  }
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    std::size_t hit = 0;
    for (std::size_t q = 0; q < te.size(); ++q) hit += r.predictions[ki][q] == test.labels[q];
    const double acc = static_cast<double>(hit) / static_cast<double>(te.size());
    r.accuracy.push_back(acc);
    if (ki == 0 || acc > r.best_accuracy) {
      r.best_accuracy = acc;
      r.best_k = ks[ki];
    }
  }
  return r;
}

LinearProbeResult linear_probe(const FeatureBank& train, const FeatureBank& test, const LinearProbeConfig& config) {
  check_bank(train, "train");
  check_bank(test, "test");
  if (train.classes != test.classes || train.classes < 2) {
    throw Error(ErrorCode::Usage, "linear probe class counts differ or are below 2 (train " +
                                      std::to_string(train.classes) + ", test " + std::to_string(test.classes) + ")");
  }
  if (train.features.dim(1) != test.features.dim(1)) throw Error(ErrorCode::Shape, "train and test feature widths differ");
  if (config.epochs < 1 || config.batch == 0 || !(config.lr > 0)) {
    throw Error(ErrorCode::Config, "linear probe needs epochs >= 1, batch >= 1 and lr > 0");
  }
  const auto n = train.size();
  const auto C = train.features.dim(1);
  const auto K = static_cast<std::int64_t>(train.classes);
  const DType dt = train.features.dtype();
  for (auto l : train.labels)
    if (l < 0 || l >= K) throw Error(ErrorCode::Usage, "train label outside the class range");

  Tensor w = Tensor::zeros({C, K}, dt);
  Tensor b = Tensor::zeros({K}, dt);
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  schedules::OptimizerConfig oc;
  oc.kind = schedules::OptimizerKind::Sgd;
  oc.momentum = config.momentum;
  oc.weight_decay = 0.0;
  schedules::Optimizer opt(oc, {{"weight", w, false}, {"bias", b, false}});

  const auto x_all = train.features.to_vector();
  const std::int64_t per_epoch = static_cast<std::int64_t>((n + config.batch - 1) / config.batch);
  const auto lr = schedules::warmup_cosine(config.lr, 0.0, 0, per_epoch * config.epochs);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto perm = data::epoch_permutation(n, config.seed ^ 0x9e3779b97f4a7c15ULL, static_cast<std::uint64_t>(epoch));
    for (std::size_t begin = 0; begin < n; begin += config.batch) {
      const std::size_t end = std::min(n, begin + config.batch);
      const auto rows = static_cast<std::int64_t>(end - begin);
      std::vector<double> xb(static_cast<std::size_t>(rows * C)), yb(static_cast<std::size_t>(rows * K), 0.0);
      for (std::size_t r = 0; r < end - begin; ++r) {
        const std::size_t src = perm[begin + r];
        std::copy_n(x_all.begin() + static_cast<std::ptrdiff_t>(src * static_cast<std::size_t>(C)), C,
                    xb.begin() + static_cast<std::ptrdiff_t>(r * static_cast<std::size_t>(C)));
        yb[r * static_cast<std::size_t>(K) + static_cast<std::size_t>(train.labels[src])] = 1.0;
      }
      const Tensor x = Tensor::from_values({rows, C}, xb, dt), y = Tensor::from_values({rows, K}, yb, dt);
      const Tensor loss = scale(mean(sum_lastdim(mul(y, log_softmax_lastdim(linear(x, w, b))))), -1.0);
      backward(loss);
      opt.step(schedules::schedule_value(lr, step++));
    }
  }

  LinearProbeResult r;
  {
    NoGradGuard no_grad;
    const auto logits = rows_of(linear(test.features, w, b));
    std::size_t hit = 0;
    for (std::size_t q = 0; q < logits.size(); ++q) {
      r.predictions.push_back(argmax_first(logits[q]));
      hit += r.predictions.back() == test.labels[q];
    }
    r.accuracy = static_cast<double>(hit) / static_cast<double>(logits.size());
    r.weight = transpose(w, 0, 1).detach().clone();
    r.bias = b.detach().clone();
  }
  return r;
}

std::vector<double> attention_distance(const Tensor& attention, std::int64_t gh, std::int64_t gw, double cell) {
  if (attention.ndim() != 4 || attention.dim(2) != attention.dim(3) || attention.dim(2) != gh * gw) {
    throw Error(ErrorCode::Shape, "attention " + to_string(attention.shape()) + " does not match a " +
                                      std::to_string(gh) + "x" + std::to_string(gw) + " grid");
  }
  const auto B = attention.dim(0), H = attention.dim(1), N = gh * gw;
  const auto a = attention.to_vector();
  std::vector<double> dist(static_cast<std::size_t>(N * N));
  for (std::int64_t q = 0; q < N; ++q)
    for (std::int64_t k = 0; k < N; ++k) {
      const double dy = static_cast<double>(q / gw - k / gw), dx = static_cast<double>(q % gw - k % gw);
      dist[static_cast<std::size_t>(q * N + k)] = cell * std::sqrt(dy * dy + dx * dx);
    }
  std::vector<double> out(static_cast<std::size_t>(H), 0.0);
  for (std::int64_t h = 0; h < H; ++h) {
    double acc = 0;
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t q = 0; q < N; ++q) {
        const std::size_t row = static_cast<std::size_t>(((b * H + h) * N + q) * N);
        for (std::int64_t k = 0; k < N; ++k) acc += a[row + static_cast<std::size_t>(k)] * dist[static_cast<std::size_t>(q * N + k)];
      }
    out[static_cast<std::size_t>(h)] = acc / static_cast<double>(B * N);
  }
  return out;
}

Tensor pseudo_attention(const Tensor& feature_map, double temperature) {
  if (feature_map.ndim() != 4) throw Error(ErrorCode::Shape, "feature map must be [B, C, h, w]");
  if (!(temperature > 0)) throw Error(ErrorCode::Parameter, "pseudo-attention temperature must be positive");
  NoGradGuard no_grad;
  const auto B = feature_map.dim(0), N = feature_map.dim(2) * feature_map.dim(3);
  const Tensor t = l2_normalize_lastdim(models::feature_map_to_tokens(feature_map));
  return reshape(softmax_lastdim(bmm(t, t, true), temperature), {B, 1, N, N}).detach();
}

MadReport mean_attention_distance(const models::Network& model, const Tensor& images, double pseudo_temperature) {
  NoGradGuard no_grad;
  models::EncodeCapture cap;
  model.encode(images, &cap);
  MadReport r;
  const auto H = images.dim(2), W = images.dim(3);
  if (!cap.attention.empty()) {
    r.kind = "attention";
    const auto p = std::get<models::VitEncoder>(model.encoder).config.patch;
    for (const auto& a : cap.attention) {
      r.per_head.push_back(attention_distance(a, H / p, W / p, static_cast<double>(p)));
      r.cell_pixels.push_back(static_cast<double>(p));
    }
  } else if (!cap.feature_maps.empty()) {
    r.kind = "cosine pseudo-attention";
    for (const auto& f : cap.feature_maps) {
      const double cell = static_cast<double>(H) / static_cast<double>(f.dim(2));
      r.per_head.push_back(attention_distance(pseudo_attention(f, pseudo_temperature), f.dim(2), f.dim(3), cell));
      r.cell_pixels.push_back(cell);
    }
  } else {
    throw Error(ErrorCode::Usage, "model exposes neither attention maps nor feature maps");
  }
  for (const auto& heads : r.per_head) {
    r.per_layer.push_back(std::accumulate(heads.begin(), heads.end(), 0.0) / static_cast<double>(heads.size()));
  }
  return r;
}

double prediction_consistency(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::Usage, "prediction vectors differ in length (" + std::to_string(a.size()) + " vs " +
                                      std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw Error(ErrorCode::Usage, "no predictions to compare");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

void export_embeddings(const FeatureBank& bank, const std::filesystem::path& path) {
  check_bank(bank, "exported");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto v = bank.features.to_vector();
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (double x : v) {
      const auto f = static_cast<float>(x);
      char bytes[4];
      std::memcpy(bytes, &f, 4);
      out.write(bytes, 4);
    }
    if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
  }
  auto header = path;
  header += ".txt";
  std::ofstream h(header, std::ios::trunc);
  h << "rows " << bank.features.dim(0) << "\ncols " << bank.features.dim(1) << "\ntag " << bank.tag << "\nnormalized "
    << (bank.normalized ? 1 : 0) << "\ndtype float32-le\n\n";
  for (auto l : bank.labels) h << l << '\n';
  if (!h) throw Error(ErrorCode::Io, "failed writing " + header.string());
}

}  // namespace mokd::eval
