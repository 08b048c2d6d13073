// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "engine/ops.hpp"
#include "json.hpp"
#include "trainer/checkpoint.hpp"

namespace mokd::trainer {

using namespace engine;
using distill::Head;

namespace {

constexpr std::size_t kMlp = 0, kT = 1;

Tensor zero_center(const TrainConfig& c, int i) {
  return Tensor::zeros({c.models[static_cast<std::size_t>(i)].network.head.out_dim}, c.dtype);
}

models::Network create_network(const TrainConfig& c, int i) {
  const auto& self = c.models[static_cast<std::size_t>(i)].network;
  const auto& partner = c.models[static_cast<std::size_t>(1 - i)].network;
  Rng rng = derive_rng(c.seed, {kStreamInit, static_cast<std::uint64_t>(i)});
  Rng adapter_rng = derive_rng(c.seed, {kStreamInit, 100 + static_cast<std::uint64_t>(i)});
  return models::Network::create(self, partner.channels(), c.dtype, rng, adapter_rng);
}

Tensor concat_rows(std::span<const Tensor> parts) { return concat(parts, 0); }

void set_momentum_differentiable(models::ModelPair& pair, bool on) {
  for (auto& net : pair.momentum) {
    for (auto& p : net.params()) {
      p.tensor.set_requires_grad(on);
      p.tensor.zero_grad();
    }
  }
}

bool has_nonzero_grad(const Tensor& t) {
  if (!t.has_grad()) return false;
  for (double g : t.grad().to_vector())
    if (g != 0.0) return true;
  return false;
}

void audit_clean(const ParamList& params, const std::string& what, int loss) {
  for (const auto& p : params) {
    if (has_nonzero_grad(p.tensor)) {
      throw Error(ErrorCode::Structural, "L" + std::to_string(loss) + " leaked gradient into " + what + p.name);
    }
  }
}

std::vector<std::vector<double>> snapshot_grads(const ParamList& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.push_back(p.tensor.has_grad() ? p.tensor.grad().to_vector() : std::vector<double>{});
  return out;
}

std::string dump(const distill::LossBreakdown& b) {
  std::ostringstream os;
  for (auto [name, t] : {std::pair{"sm", &b.sm}, {"st", &b.st}, {"cm", &b.cm}, {"ct", &b.ct}})
    if (t->defined()) os << ' ' << name << '=' << t->item();
  return os.str();
}

}  // namespace

TrainState init_state(const TrainConfig& config) {
  validate(config);
  TrainState s;
  s.seed = config.seed;
  s.config_hash = config_hash(config);
  for (int i = 0; i < 2; ++i) {
    const auto k = static_cast<std::size_t>(i);
    s.pair.online[k] = create_network(config, i);
    s.pair.momentum[k] = s.pair.online[k].frozen_copy();
    s.optimizers[k] = schedules::Optimizer(config.models[k].optimizer, s.pair.online[k].params());
    s.centers[k] = {zero_center(config, i), zero_center(config, i)};
  }
  return s;
}

std::int64_t steps_per_epoch(const TrainConfig& config, std::size_t dataset_size) {
  auto n = static_cast<std::int64_t>(data::batches_per_epoch(dataset_size, config.batch_size));
  if (config.steps_per_epoch > 0) n = std::min<std::int64_t>(n, static_cast<std::int64_t>(config.steps_per_epoch));
  if (n == 0) {
    throw Error(ErrorCode::Config, "dataset of " + std::to_string(dataset_size) + " images is smaller than one batch of " +
                                       std::to_string(config.batch_size));
  }
  return n;
}

Schedules make_schedules(const TrainConfig& c, std::int64_t spe) {
  Schedules s;
  s.steps_per_epoch = spe;
  const std::int64_t total = spe * c.epochs;
  for (std::size_t i = 0; i < 2; ++i) {
    const double base = c.models[i].base_lr * static_cast<double>(c.batch_size) / 256.0;
    s.lr[i] = schedules::warmup_cosine(base, c.min_lr, spe * c.warmup_epochs, total);
  }
  s.teacher_tau = schedules::linear_ramp(c.teacher_tau_start, c.teacher_tau,
                                         std::min<std::int64_t>(spe * c.teacher_tau_ramp_epochs, total), total);
  s.ema = schedules::cosine_to_one(c.ema_base, total);
  return s;
}

ForwardResult forward_losses(const models::ModelPair& pair, const Centers& centers, const TrainConfig& c,
                             std::span<const Tensor> views, std::size_t globals, double teacher_tau) {
  if (views.size() < globals || globals < 2) throw Error(ErrorCode::Usage, "a batch needs at least 2 global views");
  const bool t_on = c.t_branch;
  struct Side {
    std::vector<models::Representation> online, momentum;
    std::vector<Tensor> mlp_logs, t_logs;        // student log-probabilities
    std::vector<Tensor> mlp_teach, t_teach;      // teacher probabilities
    std::vector<Tensor> mlp_logits, t_logits;    // raw momentum logits, for centering
  };
  std::array<Side, 2> side;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& on = pair.online[i];
    const auto& mo = pair.momentum[i];
    auto& s = side[i];
    for (std::size_t v = 0; v < views.size(); ++v) {
      s.online.push_back(on.encode(views[v]));
      s.mlp_logs.push_back(distill::student_log_probs(models::mlp_head_forward(s.online[v].pooled, on.mlp), c.student_tau));
      if (t_on && v < globals) {
        s.t_logs.push_back(
            distill::student_log_probs(models::t_head_self_forward(s.online[v].tokens, on.thead), c.student_tau));
      }
    }
    for (std::size_t g = 0; g < globals; ++g) {
      s.momentum.push_back(mo.encode(views[g]));
      s.mlp_logits.push_back(models::mlp_head_forward(s.momentum[g].pooled, mo.mlp));
      s.mlp_teach.push_back(distill::teacher_probs(s.mlp_logits[g], centers[i][kMlp], teacher_tau));
      if (t_on) {
        s.t_logits.push_back(models::t_head_self_forward(s.momentum[g].tokens, mo.thead));
        s.t_teach.push_back(distill::teacher_probs(s.t_logits[g], centers[i][kT], teacher_tau));
      }
    }
  }

  ForwardResult out;
  for (std::size_t i = 0; i < 2; ++i) {
    const std::size_t p = 1 - i;
    auto& s = side[i];
    // search[v][g]: own online view v queries the partner momentum tokens of view g.
    std::vector<std::vector<Tensor>> search(globals, std::vector<Tensor>(globals));
    if (t_on) {
      models::SearchOptions opts;
      opts.query_grad = c.search_query_grad;
      for (std::size_t v = 0; v < globals; ++v)
        for (std::size_t g = 0; g < globals; ++g) {
          if (g == v) continue;
          Tensor logits = models::t_head_search_forward(s.online[v].pooled, side[p].momentum[g].tokens,
                                                        pair.momentum[p].thead, pair.online[i].adapter, opts);
          search[v][g] = c.search_query_grad
                             ? distill::sharpen(sub(logits, centers[p][kT].detach()), teacher_tau)
                             : distill::teacher_probs(logits, centers[p][kT], teacher_tau);
        }
    }
    const Tensor sm = distill::self_distillation_loss(s.mlp_logs, s.mlp_teach, Head::Mlp);
    const Tensor st = t_on ? distill::self_distillation_loss(s.t_logs, s.t_teach, Head::T) : Tensor{};
    const auto cross = distill::cross_distillation_loss(s.mlp_logs, side[p].mlp_teach, s.t_logs, search, t_on,
                                                        c.search_query_grad);
    try {
      out.losses[i] = distill::total_loss(sm, st, cross.mlp, cross.search, c.models[i].lambda);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Numeric) throw;
      distill::LossBreakdown partial;
      partial.sm = sm;
      partial.st = st;
      partial.cm = cross.mlp;
      partial.ct = cross.search;
      throw Error(ErrorCode::Numeric, "model " + std::to_string(i + 1) + ": " + e.what() + " (terms:" + dump(partial) + ")");
    }
    {
      NoGradGuard no_grad;
      out.teacher_logits[i][kMlp] = concat_rows(s.mlp_logits).detach();
      if (t_on) out.teacher_logits[i][kT] = concat_rows(s.t_logits).detach();
    }
    out.entropy_mlp[i] = distill::mean_entropy(s.mlp_teach);
    out.entropy_t[i] = t_on ? distill::mean_entropy(s.t_teach) : 0.0;
  }
  return out;
}

MetricsRecord train_step(TrainState& state, const TrainConfig& config, const Schedules& sched,
                         const data::Batch& batch, const StepOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  if (batch.views.empty() || batch.indices.empty()) throw Error(ErrorCode::Usage, "empty batch");
  const std::int64_t step = state.step;
  const double tau_t = schedules::schedule_value(sched.teacher_tau, step);
  const double ema = schedules::schedule_value(sched.ema, step);
  const std::array<double, 2> lr{schedules::schedule_value(sched.lr[0], step),
                                 schedules::schedule_value(sched.lr[1], step)};

  if (options.audit) set_momentum_differentiable(state.pair, true);
  struct Restore {
    models::ModelPair& pair;
    bool on;
    ~Restore() {
      if (on) set_momentum_differentiable(pair, false);
    }
  } restore{state.pair, options.audit};

  ForwardResult fwd = forward_losses(state.pair, state.centers, config, batch.views, batch.global_count, tau_t);

  const ParamList on0 = state.pair.online[0].params(), on1 = state.pair.online[1].params();
  backward(fwd.losses[0].total);
  std::vector<std::vector<double>> after_first;
  if (options.audit) {
    audit_clean(on1, "model 2 online ", 1);
    audit_clean(state.pair.momentum[0].params(), "model 1 momentum ", 1);
    audit_clean(state.pair.momentum[1].params(), "model 2 momentum ", 1);
    after_first = snapshot_grads(on0);
  }
  backward(fwd.losses[1].total);
  if (options.audit) {
    if (snapshot_grads(on0) != after_first) throw Error(ErrorCode::Structural, "L2 leaked gradient into model 1 online");
    audit_clean(state.pair.momentum[0].params(), "model 1 momentum ", 2);
    audit_clean(state.pair.momentum[1].params(), "model 2 momentum ", 2);
  }

  state.optimizers[0].step(lr[0]);
  state.optimizers[1].step(lr[1]);
  for (std::size_t i = 0; i < 2; ++i) {
    schedules::ema_update(state.pair.momentum[i].params(), state.pair.online[i].params(), ema);
  }
  for (std::size_t i = 0; i < 2; ++i) {
    state.centers[i][kMlp] = distill::center_update(state.centers[i][kMlp], fwd.teacher_logits[i][kMlp],
                                                    config.center_momentum);
    if (config.t_branch) {
      state.centers[i][kT] = distill::center_update(state.centers[i][kT], fwd.teacher_logits[i][kT],
                                                    config.center_momentum);
    }
  }

  MetricsRecord rec;
  rec.step = step;
  rec.epoch = state.epoch;
  rec.teacher_tau = tau_t;
  rec.ema = ema;
  rec.audited = options.audit;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& b = fwd.losses[i];
    auto& m = rec.models[i];
    m.sm = b.sm.item();
    m.st = b.st.defined() ? b.st.item() : 0.0;
    m.cm = b.cm.item();
    m.ct = b.ct.defined() ? b.ct.item() : 0.0;
    m.self = b.self.item();
    m.cross = b.cross.item();
    m.total = b.total.item();
    m.lambda = b.lambda;
    m.entropy_mlp = fwd.entropy_mlp[i];
    m.entropy_t = fwd.entropy_t[i];
    m.lr = lr[i];
    m.identities_hold = b.identities_hold();
  }
  ++state.step;
  ++state.step_in_epoch;
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return rec;
}

std::string MetricsRecord::to_json(bool t_branch) const {
  using nlohmann::json;
  json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["teacher_tau"] = teacher_tau;
  j["ema"] = ema;
  j["wall_ms"] = wall_ms;
  j["audited"] = audited;
  json arr = json::array();
  for (const auto& m : models) {
    json o;
    o["sm"] = m.sm;
    o["st"] = t_branch ? json(m.st) : json(nullptr);
    o["cm"] = m.cm;
    o["ct"] = t_branch ? json(m.ct) : json(nullptr);
    o["self"] = m.self;
    o["cross"] = m.cross;
    o["total"] = m.total;
    o["lambda"] = m.lambda;
    o["entropy_mlp"] = m.entropy_mlp;
    o["entropy_t"] = t_branch ? json(m.entropy_t) : json(nullptr);
    o["lr"] = m.lr;
    o["identities_hold"] = m.identities_hold;
    arr.push_back(std::move(o));
  }
  j["models"] = std::move(arr);
  return j.dump();
}

SoloState init_solo(const TrainConfig& config, int index) {
  validate(config);
  SoloState s;
  s.index = index;
  s.online = create_network(config, index);
  s.momentum = s.online.frozen_copy();
  s.optimizer = schedules::Optimizer(config.models[static_cast<std::size_t>(index)].optimizer, s.online.params());
  s.center = zero_center(config, index);
  return s;
}

double solo_step(SoloState& s, const TrainConfig& c, const Schedules& sched, const data::Batch& batch) {
  const auto i = static_cast<std::size_t>(s.index);
  const double tau_t = schedules::schedule_value(sched.teacher_tau, s.step);
  const double ema = schedules::schedule_value(sched.ema, s.step);
  const double lr = schedules::schedule_value(sched.lr[i], s.step);
  const std::size_t globals = batch.global_count;

  std::vector<Tensor> logs, teach, logits;
  for (const auto& view : batch.views) {
    logs.push_back(distill::student_log_probs(models::mlp_head_forward(s.online.encode(view).pooled, s.online.mlp),
                                              c.student_tau));
  }
  for (std::size_t g = 0; g < globals; ++g) {
    logits.push_back(models::mlp_head_forward(s.momentum.encode(batch.views[g]).pooled, s.momentum.mlp));
    teach.push_back(distill::teacher_probs(logits[g], s.center, tau_t));
  }
  const Tensor loss = distill::self_distillation_loss(logs, teach, Head::Mlp);
  if (!std::isfinite(loss.item())) throw Error(ErrorCode::Numeric, "non-finite self-distillation loss");
  backward(loss);
  s.optimizer.step(lr);
  schedules::ema_update(s.momentum.params(), s.online.params(), ema);
  Tensor stacked;
  {
    NoGradGuard no_grad;
    stacked = concat_rows(logits).detach();
  }
  s.center = distill::center_update(s.center, stacked, c.center_momentum);
  ++s.step;
  return loss.item();
}

namespace {

/// Keeps the first `lines` lines of a metrics file (drops records written
/// after the checkpoint being resumed).
void truncate_lines(const std::filesystem::path& path, std::int64_t lines) {
  std::ifstream in(path);
  std::string kept, line;
  for (std::int64_t n = 0; n < lines && std::getline(in, line); ++n) kept += line + '\n';
  in.close();
  std::ofstream(path, std::ios::trunc) << kept;
}

}  // namespace

RunResult run_pretraining(const TrainConfig& config, const data::LabeledDataset& data, const RunPaths& paths,
                          const ProgressFn& progress, std::int64_t stop_after_steps) {
  validate(config);
  if (data.size() == 0) throw Error(ErrorCode::Usage, "training dataset is empty");
  const std::int64_t spe = steps_per_epoch(config, data.size());
  const Schedules sched = make_schedules(config, spe);
  const auto ckpt_dir = paths.output_dir / "checkpoints";
  std::filesystem::create_directories(ckpt_dir);

  RunResult result;
  result.metrics = paths.output_dir / "metrics.ndjson";
  if (!paths.resume.empty()) {
    result.state = checkpoint_load(paths.resume, config, paths.force);
    truncate_lines(result.metrics, result.state.step);
  } else {
    result.state = init_state(config);
    std::ofstream(result.metrics, std::ios::trunc);
  }
  TrainState& state = result.state;
  std::ofstream metrics(result.metrics, std::ios::app);
  if (!metrics) throw Error(ErrorCode::Io, "cannot open metrics file " + result.metrics.string());

  data::LoaderConfig lc;
  lc.batch_size = config.batch_size;
  lc.seed = config.seed;
  lc.workers = config.deterministic ? 1 : config.workers;
  lc.dtype = config.dtype;

  auto save = [&](const std::string& name) {
    const auto path = ckpt_dir / name;
    checkpoint_save(state, path);
    result.final_checkpoint = path;
  };

  while (state.epoch < config.epochs) {
    data::EpochLoader loader(data, config.augment, lc, static_cast<std::uint64_t>(state.epoch),
                             static_cast<std::size_t>(state.step_in_epoch));
    while (state.step_in_epoch < spe) {
      auto batch = loader.next();
      if (!batch) break;
      const bool audit = config.audit_every > 0 && state.step % config.audit_every == 0;
      const MetricsRecord rec = train_step(state, config, sched, *batch, {audit});
      metrics << rec.to_json(config.t_branch) << '\n';
      metrics.flush();
      ++result.steps_executed;
      if (progress) progress(rec);
      if (stop_after_steps > 0 && result.steps_executed >= stop_after_steps) {
        save("interrupted.ckpt");
        return result;
      }
    }
    ++state.epoch;
    state.step_in_epoch = 0;
    if (config.checkpoint_every > 0 && state.epoch % config.checkpoint_every == 0) {
      save("epoch" + std::to_string(state.epoch) + ".ckpt");
    }
  }
  save("final.ckpt");
  return result;
}

}  // namespace mokd::trainer
