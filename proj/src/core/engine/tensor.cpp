// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "engine/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace mokd::engine {

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<bool> g_check_finite{false};
std::atomic<std::uint64_t> g_node_seq{0};

Buffer make_buffer(DType dtype, std::int64_t n) {
  if (dtype == DType::F32) return std::vector<float>(static_cast<std::size_t>(n), 0.0F);
  return std::vector<double>(static_cast<std::size_t>(n), 0.0);
}

void accumulate(Buffer& dst, const Buffer& src) {
  std::visit(
      [&](auto& d) {
        using V = std::decay_t<decltype(d)>;
        const auto& s = std::get<V>(src);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
      },
      dst);
}

bool buffer_finite(const Buffer& b) {
  return std::visit(
      [](const auto& v) {
        return std::all_of(v.begin(), v.end(), [](auto x) { return std::isfinite(x); });
      },
      b);
}

}  // namespace

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

const char* to_string(DType dtype) { return dtype == DType::F32 ? "f32" : "f64"; }

Tensor make_tensor(Shape shape, DType dtype) {
  for (auto d : shape) {
    if (d < 0) throw Error(ErrorCode::Shape, "negative dimension in shape " + to_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->values = std::make_shared<Buffer>(make_buffer(dtype, numel(shape)));
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  return Tensor(std::move(impl));
}

Tensor make_view(const Tensor& base, Shape shape) {
  if (numel(shape) != base.numel()) {
    throw Error(ErrorCode::Shape, "cannot view " + to_string(base.shape()) + " as " + to_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->values = base.values_ptr();
  impl->shape = std::move(shape);
  impl->dtype = base.dtype();
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return make_tensor(std::move(shape), dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t = make_tensor(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.mutable_data<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, DType dtype) {
  if (engine::numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw Error(ErrorCode::Shape, "value count " + std::to_string(values.size()) +
                                      " does not match shape " + to_string(shape));
  }
  Tensor t = make_tensor(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.mutable_data<T>();
    for (std::size_t i = 0; i < values.size(); ++i) d[i] = static_cast<T>(values[i]);
  });
  return t;
}

Tensor Tensor::from_buffer(Shape shape, Buffer values) {
  const auto n = std::visit([](const auto& v) { return static_cast<std::int64_t>(v.size()); }, values);
  if (engine::numel(shape) != n) throw Error(ErrorCode::Shape, "buffer size does not match shape " + to_string(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->dtype = std::holds_alternative<std::vector<float>>(values) ? DType::F32 : DType::F64;
  impl->values = std::make_shared<Buffer>(std::move(values));
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

std::int64_t Tensor::dim(int axis) const {
  const int n = ndim();
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) throw Error(ErrorCode::Shape, "axis out of range for shape " + to_string(shape()));
  return impl_->shape[static_cast<std::size_t>(a)];
}

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorCode::Usage, "item() on tensor of shape " + to_string(shape()));
  return at(0);
}

double Tensor::at(std::int64_t i) const {
  return std::visit([&](const auto& v) { return static_cast<double>(v.at(static_cast<std::size_t>(i))); },
                    *impl_->values);
}

std::vector<double> Tensor::to_vector() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, *impl_->values);
}

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw Error(ErrorCode::Usage, "requires_grad can only be set on leaf tensors");
  impl_->requires_grad = flag;
  return *this;
}

Tensor Tensor::grad() const {
  if (!impl_->grad) return {};
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->dtype = impl_->dtype;
  impl->values = impl_->grad;
  return Tensor(std::move(impl));
}

void Tensor::zero_grad() { impl_->grad.reset(); }

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->dtype = impl_->dtype;
  impl->values = impl_->values;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->dtype = impl_->dtype;
  impl->values = std::make_shared<Buffer>(*impl_->values);
  return Tensor(std::move(impl));
}

Tensor Tensor::to(DType dtype) const {
  if (dtype == impl_->dtype) return clone();
  Tensor out = make_tensor(impl_->shape, dtype);
  std::visit(
      [&](const auto& src) {
        dispatch(dtype, [&](auto tag) {
          using T = decltype(tag);
          auto d = out.mutable_data<T>();
          for (std::size_t i = 0; i < src.size(); ++i) d[i] = static_cast<T>(src[i]);
        });
      },
      *impl_->values);
  return out;
}

void Tensor::assign(const Tensor& other) {
  if (other.shape() != shape() || other.dtype() != dtype()) {
    throw Error(ErrorCode::Structural, "assign: " + to_string(other.shape()) + " into " + to_string(shape()));
  }
  *impl_->values = *other.impl_->values;
}

GradSink::GradSink(const std::vector<Tensor>& inputs)
    : wants_(inputs.size()), sizes_(inputs.size()), slots_(inputs.size()) {
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    wants_[i] = inputs[i].defined() && inputs[i].requires_grad();
    sizes_[i] = inputs[i].defined() ? inputs[i].numel() : 0;
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void set_check_finite(bool enabled) { g_check_finite = enabled; }
bool check_finite_enabled() { return g_check_finite; }

bool record(Tensor& out, const char* op, std::vector<Tensor> inputs,
            std::function<void(const Buffer&, GradSink&)> backward) {
  if (g_check_finite && !buffer_finite(*out.values_ptr())) {
    throw Error(ErrorCode::Numeric, std::string("non-finite result from ") + op);
  }
  if (!g_grad_enabled) return false;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!any) return false;
  auto node = std::make_shared<Node>();
  node->seq = ++g_node_seq;
  node->op = op;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  out.impl()->node = std::move(node);
  return true;
}

ComputationRecord computation_record(const Tensor& root) {
  ComputationRecord nodes;
  if (!root.defined() || !root.node()) return nodes;
  std::unordered_set<const Node*> seen;
  std::vector<std::shared_ptr<Node>> stack{root.node()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    for (const auto& in : n->inputs) {
      if (in.defined() && in.node() && seen.insert(in.node().get()).second) stack.push_back(in.node());
    }
    nodes.push_back(std::move(n));
  }
  // Inputs always exist before the node that consumes them, so creation order
  // is a topological order.
  std::sort(nodes.begin(), nodes.end(), [](const auto& a, const auto& b) { return a->seq < b->seq; });
  return nodes;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw Error(ErrorCode::Usage, "backward requires a scalar loss, got shape " +
                                      (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!std::isfinite(loss.item())) throw Error(ErrorCode::Numeric, "backward from a non-finite loss");

  Buffer seed = make_buffer(loss.dtype(), 1);
  std::visit([](auto& v) { v[0] = 1; }, seed);

  std::vector<TensorImpl*> touched;
  auto accumulate_leaf = [&](const Tensor& leaf, std::unique_ptr<Buffer> g) {
    auto* impl = leaf.impl();
    if (!impl->requires_grad) return;
    if (!impl->grad) {
      impl->grad = std::make_shared<Buffer>(std::move(*g));
    } else {
      accumulate(*impl->grad, *g);
    }
    touched.push_back(impl);
  };

  if (!loss.node()) {
    accumulate_leaf(loss, std::make_unique<Buffer>(std::move(seed)));
  } else {
    const ComputationRecord order = computation_record(loss);
    std::unordered_map<const Node*, std::unique_ptr<Buffer>> pending;
    pending.emplace(loss.node().get(), std::make_unique<Buffer>(std::move(seed)));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const Node* node = it->get();
      auto found = pending.find(node);
      if (found == pending.end()) continue;
      std::unique_ptr<Buffer> grad_out = std::move(found->second);
      pending.erase(found);

      GradSink sink(node->inputs);
      node->backward(*grad_out, sink);
      for (std::size_t i = 0; i < node->inputs.size(); ++i) {
        if (!sink.wants(i)) continue;
        auto g = sink.take(i);
        if (!g) continue;
        const Tensor& in = node->inputs[i];
        if (in.node()) {
          auto& slot = pending[in.node().get()];
          if (!slot) {
            slot = std::move(g);
          } else {
            accumulate(*slot, *g);
          }
        } else {
          accumulate_leaf(in, std::move(g));
        }
      }
    }
  }

  for (auto* impl : touched) {
    if (!buffer_finite(*impl->grad)) {
      throw Error(ErrorCode::Numeric, "non-finite gradient in parameter of shape " + to_string(impl->shape));
    }
  }
}

bool all_finite(const Tensor& t) { return buffer_finite(*t.values_ptr()); }

void require_finite(const Tensor& t, const char* what) {
  if (!all_finite(t)) throw Error(ErrorCode::Numeric, std::string("non-finite values in ") + what);
}

}  // namespace mokd::engine
