// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

// Exhaustive weighted-kNN reference: full sort of every train sample.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "eval/eval.hpp"

namespace ref {

inline std::vector<std::int32_t> knn_brute_force(const mokd::eval::FeatureBank& train, const mokd::eval::FeatureBank& test,
                                                 int k, double temperature) {
  const auto c = static_cast<std::size_t>(train.features.dim(1));
  const auto tr = train.features.to_vector(), te = test.features.to_vector();
  int classes = std::max(train.classes, test.classes);
  for (auto l : train.labels) classes = std::max(classes, l + 1);
  for (auto l : test.labels) classes = std::max(classes, l + 1);
  std::vector<std::int32_t> out;
  for (std::size_t q = 0; q < test.size(); ++q) {
    struct Cand {
      double sim;
      std::size_t index;
    };
    std::vector<Cand> all;
    for (std::size_t j = 0; j < train.size(); ++j) {
      double s = 0;
      for (std::size_t d = 0; d < c; ++d) s += te[q * c + d] * tr[j * c + d];
      all.push_back({s, j});
    }
    std::stable_sort(all.begin(), all.end(), [](const Cand& a, const Cand& b) { return a.sim > b.sim; });
    std::vector<double> votes(static_cast<std::size_t>(classes), 0.0);
    for (int n = 0; n < k; ++n) votes[static_cast<std::size_t>(train.labels[all[static_cast<std::size_t>(n)].index])] +=
        std::exp(all[static_cast<std::size_t>(n)].sim / temperature);
    std::int32_t best = 0;
    for (std::int32_t cl = 1; cl < classes; ++cl)
      if (votes[static_cast<std::size_t>(cl)] > votes[static_cast<std::size_t>(best)]) best = cl;
    out.push_back(best);
  }
  return out;
}

}  // namespace ref
