// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "engine/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "common/rng.hpp"

namespace mokd::engine {

namespace {

struct Coord {
  std::size_t tensor;
  std::int64_t index;
};

std::vector<Coord> choose_coords(std::span<const Tensor> targets, const GradCheckOptions& options) {
  std::vector<Coord> all;
  for (std::size_t t = 0; t < targets.size(); ++t)
    for (std::int64_t i = 0; i < targets[t].numel(); ++i) all.push_back({t, i});
  if (options.sample == 0 || options.sample >= all.size()) return all;
  Rng rng(options.seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(options.sample);
  return all;
}

double read(const Tensor& t, std::int64_t i) { return t.at(i); }

void write(Tensor& t, std::int64_t i, double v) {
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    t.mutable_data<T>()[static_cast<std::size_t>(i)] = static_cast<T>(v);
  });
}

GradCheckReport compare(const std::function<double()>& eval, std::span<const Tensor> targets,
                        const std::vector<std::vector<double>>& analytic, double tolerance,
                        const GradCheckOptions& options) {
  GradCheckReport report;
  const double cbrt_eps = std::cbrt(std::numeric_limits<double>::epsilon());
  for (const Coord& c : choose_coords(targets, options)) {
    Tensor t = targets[c.tensor];
    const double x0 = read(t, c.index);
    const double h = cbrt_eps * std::max(1.0, std::abs(x0));
    write(t, c.index, x0 + h);
    const double fp = eval();
    write(t, c.index, x0 - h);
    const double fm = eval();
    write(t, c.index, x0);
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic[c.tensor][static_cast<std::size_t>(c.index)];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
    const double err = std::abs(a - numeric) / denom;
    report.max_rel_err = std::max(report.max_rel_err, std::isfinite(err) ? err : std::numeric_limits<double>::infinity());
    ++report.checked;
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& fn, std::span<const Tensor> point, double tolerance,
                           const GradCheckOptions& options) {
  std::vector<Tensor> leaves;
  leaves.reserve(point.size());
  for (const auto& p : point) leaves.push_back(p.clone().set_requires_grad(true));

  std::vector<std::vector<double>> analytic;
  try {
    Tensor y = fn(leaves);
    backward(y);
  } catch (const Error&) {
    return {std::numeric_limits<double>::infinity(), 0, false};
  }
  for (const auto& l : leaves) {
    analytic.push_back(l.has_grad() ? l.grad().to_vector() : std::vector<double>(static_cast<std::size_t>(l.numel()), 0.0));
  }

  NoGradGuard no_grad;
  auto eval = [&] { return fn(leaves).item(); };
  return compare(eval, leaves, analytic, tolerance, options);
}

GradCheckReport grad_check_inplace(const std::function<Tensor()>& fn, std::span<const Tensor> targets,
                                   double tolerance, const GradCheckOptions& options) {
  for (const auto& t : targets) t.impl()->grad.reset();
  std::vector<std::vector<double>> analytic;
  try {
    backward(fn());
  } catch (const Error&) {
    return {std::numeric_limits<double>::infinity(), 0, false};
  }
  for (const auto& t : targets) {
    analytic.push_back(t.has_grad() ? t.grad().to_vector() : std::vector<double>(static_cast<std::size_t>(t.numel()), 0.0));
  }
  NoGradGuard no_grad;
  auto eval = [&] { return fn().item(); };
  return compare(eval, targets, analytic, tolerance, options);
}

}  // namespace mokd::engine
