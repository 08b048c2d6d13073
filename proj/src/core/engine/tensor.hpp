// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "common/error.hpp"

namespace mokd::engine {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

using Shape = std::vector<std::int64_t>;
using Buffer = std::variant<std::vector<float>, std::vector<double>>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);
const char* to_string(DType dtype);

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::F32 : DType::F64;
}

/// Calls `f` with a value of the scalar type matching `dtype`.
template <class F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::F32) return f(float{});
  return f(double{});
}

class Tensor;
class GradSink;

/// One recorded primitive application. Inputs are kept alive by the node;
/// outputs own the node, so the graph is released when the last output dies.
struct Node {
  std::uint64_t seq = 0;
  const char* op = "";
  std::vector<Tensor> inputs;
  std::function<void(const Buffer& grad_out, GradSink& sink)> backward;
};

struct TensorImpl {
  Shape shape;
  DType dtype = DType::F32;
  std::shared_ptr<Buffer> values;
  bool requires_grad = false;  // leaf flag
  std::shared_ptr<Buffer> grad;
  std::shared_ptr<Node> node;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::F32);
  static Tensor full(Shape shape, double value, DType dtype = DType::F32);
  static Tensor from_values(Shape shape, std::span<const double> values, DType dtype = DType::F32);
  static Tensor from_buffer(Shape shape, Buffer values);
  static Tensor scalar(double value, DType dtype = DType::F32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(int axis) const;
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  std::int64_t numel() const { return engine::numel(impl_->shape); }
  DType dtype() const { return impl_->dtype; }

  template <class T>
  std::span<const T> data() const {
    return std::get<std::vector<T>>(*impl_->values);
  }
  template <class T>
  std::span<T> mutable_data() {
    return std::get<std::vector<T>>(*impl_->values);
  }

  double item() const;
  double at(std::int64_t flat_index) const;
  std::vector<double> to_vector() const;

  /// True for leaves flagged as trainable and for every recorded result.
  bool requires_grad() const { return impl_->requires_grad || impl_->node != nullptr; }
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const { return impl_->node == nullptr; }

  /// Accumulated gradient of a leaf, or an undefined tensor when none.
  Tensor grad() const;
  bool has_grad() const { return impl_->grad != nullptr; }
  void zero_grad();
  const std::shared_ptr<Buffer>& grad_buffer() const { return impl_->grad; }

  /// Same values, no recorded edge: the stop-gradient marker.
  Tensor detach() const;
  /// Deep copy as a fresh leaf.
  Tensor clone() const;
  Tensor to(DType dtype) const;

  /// Overwrites values in place, keeping shape and dtype (parameter updates).
  void assign(const Tensor& other);

  const std::shared_ptr<Node>& node() const { return impl_->node; }
  const std::shared_ptr<Buffer>& values_ptr() const { return impl_->values; }
  TensorImpl* impl() const { return impl_.get(); }
  bool same_object(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_tensor(Shape, DType);
  friend Tensor make_view(const Tensor&, Shape);

  std::shared_ptr<TensorImpl> impl_;
};

/// Allocates a zero-filled result with no recorded history.
Tensor make_tensor(Shape shape, DType dtype);
/// New handle sharing `base`'s values under a different shape.
Tensor make_view(const Tensor& base, Shape shape);

/// Collects per-input gradients inside a node's backward function.
class GradSink {
 public:
  explicit GradSink(const std::vector<Tensor>& inputs);

  bool wants(std::size_t index) const { return wants_[index]; }

  /// Zero-initialized gradient buffer for input `index` (allocated on first use).
  template <class T>
  std::span<T> slot(std::size_t index) {
    auto& s = slots_[index];
    if (!s) s = std::make_unique<Buffer>(std::vector<T>(static_cast<std::size_t>(sizes_[index]), T(0)));
    return std::get<std::vector<T>>(*s);
  }

  std::unique_ptr<Buffer> take(std::size_t index) { return std::move(slots_[index]); }

 private:
  std::vector<bool> wants_;
  std::vector<std::int64_t> sizes_;
  std::vector<std::unique_ptr<Buffer>> slots_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Enables a finiteness check on every op result (off by default).
void set_check_finite(bool enabled);
bool check_finite_enabled();

/// Records `out` as produced by `op` from `inputs` when recording is active and
/// any input participates in differentiation. Returns whether it recorded.
bool record(Tensor& out, const char* op, std::vector<Tensor> inputs,
            std::function<void(const Buffer&, GradSink&)> backward);

/// Every node reachable from `root`, in topological order (inputs first).
using ComputationRecord = std::vector<std::shared_ptr<Node>>;
ComputationRecord computation_record(const Tensor& root);

/// Reverse-mode sweep from a scalar. Accumulates into the grad slot of every
/// reachable trainable leaf; detached edges contribute nothing.
void backward(const Tensor& loss);

bool all_finite(const Tensor& t);
void require_finite(const Tensor& t, const char* what);

}  // namespace mokd::engine
