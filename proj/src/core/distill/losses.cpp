// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "distill/losses.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "engine/ops.hpp"

namespace mokd::distill {

using namespace engine;
using engine::to_string;

Tensor sharpen(const Tensor& logits, double tau) {
  if (!(tau > 0)) throw Error(ErrorCode::Parameter, "temperature must be positive, got " + std::to_string(tau));
  return softmax_lastdim(logits, tau);
}

Tensor teacher_probs(const Tensor& logits, const Tensor& center, double tau) {
  return sharpen(sub(logits.detach(), center.detach()), tau).detach();
}

Tensor student_log_probs(const Tensor& logits, double tau) {
  if (!(tau > 0)) throw Error(ErrorCode::Parameter, "temperature must be positive, got " + std::to_string(tau));
  return log_softmax_lastdim(logits, tau);
}

Tensor center_update(const Tensor& center, const Tensor& teacher_logits, double momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw Error(ErrorCode::Parameter, "center momentum must lie in [0, 1], got " + std::to_string(momentum));
  }
  if (teacher_logits.ndim() != 2 || teacher_logits.dim(0) == 0) {
    throw Error(ErrorCode::Usage, "center update needs a non-empty batch [B, K], got " + to_string(teacher_logits.shape()));
  }
  if (teacher_logits.dim(1) != center.numel()) throw Error(ErrorCode::Shape, "center and logits widths differ");
  NoGradGuard no_grad;
  return add(scale(center, momentum), scale(mean_dim(teacher_logits, 0), 1.0 - momentum));
}

Tensor soft_cross_entropy_log(const Tensor& t, const Tensor& log_s, bool detach_teacher) {
  if (t.shape() != log_s.shape() || t.ndim() != 2) {
    throw Error(ErrorCode::Shape, "cross-entropy operands " + to_string(t.shape()) + " and " + to_string(log_s.shape()));
  }
  return scale(mean(sum_lastdim(mul(detach_teacher ? t.detach() : t, log_s))), -1.0);
}

Tensor soft_cross_entropy(const Tensor& t, const Tensor& s) { return soft_cross_entropy_log(t, log(s)); }

double mean_entropy(std::span<const Tensor> probs) {
  double total = 0.0;
  std::int64_t rows = 0;
  for (const auto& p : probs) {
    const auto k = p.dim(-1);
    const auto v = p.to_vector();
    for (std::size_t r = 0; r < v.size() / static_cast<std::size_t>(k); ++r) {
      double h = 0.0;
      for (std::int64_t j = 0; j < k; ++j) {
        const double x = v[r * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)];
        if (x > 0) h -= x * std::log(x);
      }
      total += h;
      ++rows;
    }
  }
  return rows ? total / static_cast<double>(rows) : 0.0;
}

std::vector<ViewPair> multicrop_pairs(std::span<const Tensor> teachers, std::span<const Tensor> student_logs) {
  if (teachers.size() < 2) throw Error(ErrorCode::Usage, "distillation needs at least 2 global views");
  if (student_logs.size() < teachers.size()) throw Error(ErrorCode::Usage, "fewer student views than teacher views");
  std::vector<ViewPair> pairs;
  for (std::size_t g = 0; g < teachers.size(); ++g)
    for (std::size_t v = 0; v < student_logs.size(); ++v)
      if (v != g) pairs.push_back({teachers[g], student_logs[v]});
  return pairs;
}

Tensor mean_pair_loss(std::span<const ViewPair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::Usage, "no view pairs");
  const auto term = [&](const ViewPair& p) { return soft_cross_entropy_log(p.teacher, p.student_log, !p.live_teacher); };
  Tensor acc = term(pairs[0]);
  for (std::size_t i = 1; i < pairs.size(); ++i) acc = add(acc, term(pairs[i]));
  return scale(acc, 1.0 / static_cast<double>(pairs.size()));
}

Tensor self_distillation_loss(std::span<const Tensor> student_logs, std::span<const Tensor> teachers, Head head) {
  auto students = head == Head::T ? student_logs.first(std::min(student_logs.size(), teachers.size())) : student_logs;
  return mean_pair_loss(multicrop_pairs(teachers, students));
}

CrossLosses cross_distillation_loss(std::span<const Tensor> mlp_student_logs, std::span<const Tensor> partner_teachers,
                                    std::span<const Tensor> t_student_logs,
                                    const std::vector<std::vector<Tensor>>& search_teachers, bool t_branch,
                                    bool search_grad) {
  CrossLosses out;
  out.mlp = mean_pair_loss(multicrop_pairs(partner_teachers, mlp_student_logs));
  if (!t_branch) return out;

  const std::size_t globals = partner_teachers.size();
  if (search_teachers.size() != globals || t_student_logs.size() < globals) {
    throw Error(ErrorCode::Usage, "search outputs missing for the cross T-Head loss");
  }
  std::vector<ViewPair> pairs;
  for (std::size_t v = 0; v < globals; ++v) {
    if (search_teachers[v].size() != globals) throw Error(ErrorCode::Usage, "search outputs missing for a view pair");
    for (std::size_t g = 0; g < globals; ++g) {
      if (g == v) continue;
      if (!search_teachers[v][g].defined()) throw Error(ErrorCode::Usage, "search output missing for a view pair");
      pairs.push_back({search_teachers[v][g], t_student_logs[v], search_grad});
    }
  }
  out.search = mean_pair_loss(pairs);
  return out;
}

void validate_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::Parameter, "loss weight lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
}

LossBreakdown total_loss(const Tensor& sm, const Tensor& st, const Tensor& cm, const Tensor& ct, double lambda) {
  validate_lambda(lambda);
  const std::pair<const char*, const Tensor*> terms[] = {{"sm", &sm}, {"st", &st}, {"cm", &cm}, {"ct", &ct}};
  for (const auto& [name, t] : terms) {
    if (t->defined() && !std::isfinite(t->item())) {
      throw Error(ErrorCode::Numeric, std::string("non-finite loss term ") + name + " = " + std::to_string(t->item()));
    }
  }
  LossBreakdown b;
  b.sm = sm;
  b.st = st;
  b.cm = cm;
  b.ct = ct;
  b.lambda = lambda;
  b.self = st.defined() ? add(sm, st) : sm;
  if (lambda == 0.0) {
    NoGradGuard no_grad;
    b.cross = ct.defined() ? add(cm.detach(), ct.detach()) : cm.detach();
    b.total = b.self;
  } else {
    b.cross = ct.defined() ? add(cm, ct) : cm;
    b.total = add(b.self, scale(b.cross, lambda));
  }
  return b;
}

bool LossBreakdown::identities_hold() const {
  return dispatch(total.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto v = [](const Tensor& t) { return t.defined() ? t.template data<T>()[0] : T(0); };
    const T self_v = st.defined() ? T(v(sm) + v(st)) : v(sm);
    const T cross_v = ct.defined() ? T(v(cm) + v(ct)) : v(cm);
    const T total_v = T(v(self) + T(v(cross) * static_cast<T>(lambda)));
    return v(self) == self_v && v(cross) == cross_v && v(total) == total_v;
  });
}

}  // namespace mokd::distill
