// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli/commands.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "data/dataset.hpp"
#include "eval/eval.hpp"
#include "json.hpp"
#include "trainer/checkpoint.hpp"
#include "trainer/trainer.hpp"

namespace mokd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::pair<std::string, std::string>>& usage_table() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"pretrain", "pretrain: trains the model pair on data.path; writes config.ini, metrics.ndjson and "
                   "checkpoints/ under run.output_dir"},
      {"eval-knn", "eval-knn: weighted kNN of both models; needs eval.checkpoint, data.path and a test split "
                   "(data.test_path, or test_batch.bin beside the CIFAR training files)"},
      {"eval-linear", "eval-linear: linear probe on frozen features of both models; needs eval.checkpoint and a "
                      "test split"},
      {"analyze-mad", "analyze-mad: per-layer and per-head mean attention distance of both models; needs "
                      "eval.checkpoint and data"},
      {"consistency", "consistency: fraction of test samples where eval.model_a of eval.checkpoint and "
                      "eval.model_b of eval.checkpoint_b (default: the same checkpoint) make the same kNN "
                      "prediction; eval.config_b names the second run's config.ini when it differs"},
      {"export-embeddings", "export-embeddings: writes normalized test features of both models to "
                            "run.output_dir/exports/ as float32 matrices with text headers"},
  };
  return table;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

data::LabeledDataset load_train(const Config& c) {
  if (c.data_path.empty()) {
    throw Error(ErrorCode::Usage, std::string("data.path is not set and ") + kDataRootEnv + " is empty");
  }
  auto d = data::load_dataset(c.data_path, c.format, data::Split::Train);
  d.truncate(c.train_limit);
  return d;
}

data::LabeledDataset load_test(const Config& c) {
  data::LabeledDataset d;
  if (!c.test_path.empty()) {
    d = data::load_dataset(c.test_path, c.format, data::Split::Test);
  } else if (c.format == data::Format::CifarBinary && !c.data_path.empty() && fs::is_directory(c.data_path)) {
    d = data::load_dataset(c.data_path, c.format, data::Split::Test);
  } else {
    throw Error(ErrorCode::Usage, "no test split: set data.test_path");
  }
  d.truncate(c.test_limit);
  return d;
}

trainer::TrainState load_state(const fs::path& checkpoint, const trainer::TrainConfig& train, bool force,
                               const OutputFn& out) {
  if (checkpoint.empty()) throw Error(ErrorCode::Usage, "eval.checkpoint is required");
  return trainer::checkpoint_load(checkpoint, train, force, [&](const std::string& w) { out("warning: " + w); });
}

const models::Network& pick(const trainer::TrainState& s, const Config& c, int model) {
  const auto i = static_cast<std::size_t>(model - 1);
  return c.eval.use_momentum ? s.pair.momentum[i] : s.pair.online[i];
}

std::string tag(const Config& c, int model) {
  return "model" + std::to_string(model) + "-" + (c.eval.use_momentum ? "momentum" : "online");
}

eval::FeatureBank bank(const models::Network& net, const data::LabeledDataset& d, const Config& c, bool normalize,
                       const std::string& name) {
  return eval::extract_features(net, d, normalize, static_cast<int>(c.train.augment.global.size),
                                static_cast<std::size_t>(c.eval.feature_batch), name);
}

/// k values that fit the training bank; at least one must.
std::vector<int> usable_ks(const std::vector<int>& ks, std::size_t n) {
  std::vector<int> out;
  for (int k : ks)
    if (static_cast<std::size_t>(k) <= n) out.push_back(k);
  if (out.empty()) throw Error(ErrorCode::Usage, "every eval.k exceeds the training bank size " + std::to_string(n));
  return out;
}

void write_report(const Config& c, const std::string& name, const json& report, const OutputFn& out) {
  const fs::path dir = c.output_dir / "reports";
  fs::create_directories(dir);
  const fs::path path = dir / (name + ".json");
  std::ofstream f(path);
  f << report.dump(2) << '\n';
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out("report: " + path.string());
}

void pretrain(const Config& c, const OutputFn& out, const CommandOptions& options) {
  const auto d = load_train(c);
  fs::create_directories(c.output_dir);
  {
    std::ofstream f(c.output_dir / "config.ini");
    f << to_ini(c);
    if (!f) throw Error(ErrorCode::Io, "cannot write " + (c.output_dir / "config.ini").string());
  }
  const std::int64_t spe = trainer::steps_per_epoch(c.train, d.size());
  out("pretrain: " + std::to_string(d.size()) + " images, " + std::to_string(spe) + " steps per epoch, " +
      std::to_string(c.train.epochs) + " epochs");
  std::array<double, 2> sm{}, total{};
  std::int64_t n = 0;
  auto progress = [&](const trainer::MetricsRecord& r) {
    for (std::size_t i = 0; i < 2; ++i) {
      sm[i] += r.models[i].sm;
      total[i] += r.models[i].total;
    }
    ++n;
    if ((r.step + 1) % spe != 0) return;
    std::string line = "epoch " + std::to_string(r.epoch + 1);
    for (std::size_t i = 0; i < 2; ++i) {
      line += "  model" + std::to_string(i + 1) + " sm " + fmt("%.4f", sm[i] / static_cast<double>(n)) +
              " total " + fmt("%.4f", total[i] / static_cast<double>(n));
    }
    out(line + "  tau' " + fmt("%.4f", r.teacher_tau));
    sm = {};
    total = {};
    n = 0;
  };
  const auto result =
      trainer::run_pretraining(c.train, d, {c.output_dir, options.resume, options.force}, progress);
  out("steps executed: " + std::to_string(result.steps_executed));
  out("final checkpoint: " + result.final_checkpoint.string());
  out("metrics: " + result.metrics.string());
}

void eval_knn(const Config& c, const OutputFn& out, const CommandOptions& options) {
  const auto state = load_state(c.eval.checkpoint, c.train, options.force, out);
  const auto train = load_train(c), test = load_test(c);
  json report = json::array();
  for (int m : {1, 2}) {
    const auto& net = pick(state, c, m);
    const auto tr = bank(net, train, c, true, tag(c, m)), te = bank(net, test, c, true, tag(c, m));
    const auto r = eval::knn_evaluate(tr, te, usable_ks(c.eval.ks, tr.size()), c.eval.knn_temperature);
    std::string line = tag(c, m) + " knn";
    for (std::size_t i = 0; i < r.ks.size(); ++i)
      line += "  k=" + std::to_string(r.ks[i]) + " " + fmt("%.4f", r.accuracy[i]);
    out(line + "  best k=" + std::to_string(r.best_k) + " " + fmt("%.4f", r.best_accuracy));
    report.push_back({{"model", m},
                      {"tag", tag(c, m)},
                      {"k", r.ks},
                      {"accuracy", r.accuracy},
                      {"best_k", r.best_k},
                      {"best_accuracy", r.best_accuracy},
                      {"train_size", tr.size()},
                      {"test_size", te.size()}});
  }
  write_report(c, "knn", report, out);
}

void eval_linear(const Config& c, const OutputFn& out, const CommandOptions& options) {
  const auto state = load_state(c.eval.checkpoint, c.train, options.force, out);
  const auto train = load_train(c), test = load_test(c);
  eval::LinearProbeConfig probe;
  probe.epochs = c.eval.linear_epochs;
  probe.lr = c.eval.linear_lr;
  probe.batch = static_cast<std::size_t>(c.eval.linear_batch);
  probe.seed = c.train.seed;
  json report = json::array();
  for (int m : {1, 2}) {
    const auto& net = pick(state, c, m);
    const auto r = eval::linear_probe(bank(net, train, c, false, tag(c, m)), bank(net, test, c, false, tag(c, m)),
                                      probe);
    out(tag(c, m) + " linear top-1 " + fmt("%.4f", r.accuracy));
    report.push_back({{"model", m}, {"tag", tag(c, m)}, {"accuracy", r.accuracy}, {"epochs", probe.epochs}});
  }
  write_report(c, "linear", report, out);
}

void analyze_mad(const Config& c, const OutputFn& out, const CommandOptions& options) {
  const auto state = load_state(c.eval.checkpoint, c.train, options.force, out);
  data::LabeledDataset images;
  try {
    images = load_test(c);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Usage) throw;
    images = load_train(c);
  }
  const std::size_t n = std::min(images.size(), static_cast<std::size_t>(c.eval.mad_images));
  if (n == 0) throw Error(ErrorCode::Usage, "analyze-mad: no images");
  json report = json::array();
  for (int m : {1, 2}) {
    const auto& net = pick(state, c, m);
    const auto batch = data::eval_batch(images, 0, n, static_cast<int>(c.train.augment.global.size), net.dtype());
    const auto r = eval::mean_attention_distance(net, batch);
    out(tag(c, m) + " MAD (" + r.kind + ")");
    for (std::size_t l = 0; l < r.per_layer.size(); ++l) {
      std::string line = "  layer " + std::to_string(l + 1) + " mean " + fmt("%.3f", r.per_layer[l]) + " heads";
      for (double h : r.per_head[l]) line += " " + fmt("%.3f", h);
      out(line);
    }
    report.push_back({{"model", m},
                      {"tag", tag(c, m)},
                      {"kind", r.kind},
                      {"images", n},
                      {"per_layer", r.per_layer},
                      {"per_head", r.per_head},
                      {"cell_pixels", r.cell_pixels}});
  }
  write_report(c, "mad", report, out);
}

void consistency(const Config& c, const OutputFn& out, const CommandOptions& options) {
  const auto state_a = load_state(c.eval.checkpoint, c.train, options.force, out);
  Config cb = c;
  if (!c.eval.config_b.empty()) cb = parse_config(c.eval.config_b);
  const auto state_b = c.eval.checkpoint_b.empty()
                           ? state_a
                           : load_state(c.eval.checkpoint_b, cb.train, options.force, out);
  const auto train = load_train(c), test = load_test(c);
  auto predict = [&](const trainer::TrainState& s, const Config& cfg, int m) {
    const auto& net = pick(s, c, m);
    const auto tr = eval::extract_features(net, train, true, static_cast<int>(cfg.train.augment.global.size),
                                           static_cast<std::size_t>(c.eval.feature_batch));
    const auto te = eval::extract_features(net, test, true, static_cast<int>(cfg.train.augment.global.size),
                                           static_cast<std::size_t>(c.eval.feature_batch));
    return eval::knn_evaluate(tr, te, {c.eval.consistency_k}, c.eval.knn_temperature).predictions[0];
  };
  const auto a = predict(state_a, c, c.eval.model_a);
  const auto b = predict(state_b, cb, c.eval.model_b);
  const double f = eval::prediction_consistency(a, b);
  out("consistency " + fmt("%.6f", f));
  write_report(c, "consistency",
               {{"checkpoint_a", c.eval.checkpoint.string()},
                {"model_a", c.eval.model_a},
                {"checkpoint_b", (c.eval.checkpoint_b.empty() ? c.eval.checkpoint : c.eval.checkpoint_b).string()},
                {"model_b", c.eval.model_b},
                {"k", c.eval.consistency_k},
                {"samples", a.size()},
                {"fraction", f}},
               out);
}

void export_embeddings(const Config& c, const OutputFn& out, const CommandOptions& options) {
  const auto state = load_state(c.eval.checkpoint, c.train, options.force, out);
  data::LabeledDataset d;
  try {
    d = load_test(c);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Usage) throw;
    d = load_train(c);
  }
  const fs::path dir = c.output_dir / "exports";
  fs::create_directories(dir);
  for (int m : {1, 2}) {
    const fs::path path = dir / (tag(c, m) + ".f32");
    eval::export_embeddings(bank(pick(state, c, m), d, c, true, tag(c, m)), path);
    out("exported " + std::to_string(d.size()) + " rows to " + path.string());
  }
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, text] : usage_table()) n.push_back(name);
    return n;
  }();
  return names;
}

std::string command_usage(const std::string& name) {
  for (const auto& [n, text] : usage_table())
    if (n == name) return text;
  std::string all = "unknown command '" + name + "'; expected one of:";
  for (const auto& n : command_names()) all += " " + n;
  return all;
}

void execute(const std::string& name, const Config& config, const OutputFn& out, const CommandOptions& options) {
  const OutputFn sink = out ? out : [](const std::string&) {};
  validate(config);
  if (name == "pretrain") return pretrain(config, sink, options);
  if (name == "eval-knn") return eval_knn(config, sink, options);
  if (name == "eval-linear") return eval_linear(config, sink, options);
  if (name == "analyze-mad") return analyze_mad(config, sink, options);
  if (name == "consistency") return consistency(config, sink, options);
  if (name == "export-embeddings") return export_embeddings(config, sink, options);
  throw Error(ErrorCode::Usage, command_usage(name));
}

int exit_status(ErrorCode code) { return static_cast<int>(code) + 1; }

int run_command(const std::string& name, const Config& config, const OutputFn& out, const OutputFn& err,
                const CommandOptions& options) {
  const OutputFn e = err ? err : [](const std::string&) {};
  try {
    execute(name, config, out, options);
    return 0;
  } catch (const Error& ex) {
    e(std::string(to_string(ex.code())) + ": " + ex.what());
    if (ex.code() == ErrorCode::Usage) e("usage: " + command_usage(name));
    return exit_status(ex.code());
  } catch (const std::exception& ex) {
    e(std::string("internal error: ") + ex.what());
    return kExitInternal;
  }
}

}  // namespace mokd::cli
