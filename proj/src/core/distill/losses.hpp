// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <vector>

#include "engine/tensor.hpp"

namespace mokd::distill {

using engine::DType;
using engine::Tensor;

enum class Head : std::uint8_t { Mlp = 0, T = 1 };

/// softmax(logits / tau) over the last axis.
Tensor sharpen(const Tensor& logits, double tau);

/// Teacher distribution softmax((logits - center) / tau), detached.
Tensor teacher_probs(const Tensor& logits, const Tensor& center, double tau);

/// Student log-probabilities log softmax(logits / tau), fused.
Tensor student_log_probs(const Tensor& logits, double tau);

/// c' = m c + (1 - m) mean_b(teacher_logits[b]). Result is detached.
Tensor center_update(const Tensor& center, const Tensor& teacher_logits, double momentum);

/// Mean over the batch of -sum_k t_k log s_k, for probabilities t, s [B, K].
/// Only s carries gradient.
Tensor soft_cross_entropy(const Tensor& t, const Tensor& s);

/// Same quantity from precomputed student log-probabilities.
Tensor soft_cross_entropy_log(const Tensor& t, const Tensor& log_s, bool detach_teacher = true);

/// Mean over batch and views of the entropy of teacher distributions.
double mean_entropy(std::span<const Tensor> probs);

/// One teacher/student term of a loss.
struct ViewPair {
  Tensor teacher;      // probabilities [B, K], detached
  Tensor student_log;  // log-probabilities [B, K]
  bool live_teacher = false;  // keep the teacher's graph (search query gradient)
};

/// Multi-crop pairing: every teacher view g (a global view) against every
/// student view v != g, teacher-major. Students list the global views first,
/// in the same order as the teachers.
std::vector<ViewPair> multicrop_pairs(std::span<const Tensor> teachers, std::span<const Tensor> student_logs);

/// Average soft cross-entropy over pairs, summed in order.
Tensor mean_pair_loss(std::span<const ViewPair> pairs);

/// MLP head: students cover all views; T head: the global views only.
Tensor self_distillation_loss(std::span<const Tensor> student_logs, std::span<const Tensor> teachers, Head head);

struct CrossLosses {
  Tensor mlp;     // L_cm
  Tensor search;  // L_ct; undefined when the T branch is off
};

/// `partner_teachers`: partner momentum MLP probabilities per global view.
/// `search_teachers[v][g]`: search output probabilities for own global view v
/// against partner momentum tokens of global view g (entries with g == v are
/// ignored). Empty when the T branch is off.
CrossLosses cross_distillation_loss(std::span<const Tensor> mlp_student_logs, std::span<const Tensor> partner_teachers,
                                    std::span<const Tensor> t_student_logs,
                                    const std::vector<std::vector<Tensor>>& search_teachers, bool t_branch = true,
                                    bool search_grad = false);

/// All loss terms of one model. Scalars share the dtype of the logits.
struct LossBreakdown {
  Tensor sm, st, cm, ct;  // st and ct undefined when the T branch is off
  Tensor self, cross, total;
  double lambda = 0.0;

  /// L_self = sm + st, L_cross = cm + ct, L = L_self + lambda L_cross,
  /// re-evaluated in the tensors' precision.
  bool identities_hold() const;
};

/// Assembles the breakdown from the four terms. When lambda is 0 the total is
/// L_self itself and no gradient flows through the cross terms.
LossBreakdown total_loss(const Tensor& sm, const Tensor& st, const Tensor& cm, const Tensor& ct, double lambda);

void validate_lambda(double lambda);

}  // namespace mokd::distill
