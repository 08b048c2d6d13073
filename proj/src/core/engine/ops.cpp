// Copyright 2026 The MOKD Authors
// SPDX-License-Identifier: Apache-2.0

#include "engine/ops.hpp"

// Small products would otherwise take Eigen's coefficient-wise path, whose
// vectorized reductions peel by address; packed GEMM rounds the same way for
// any buffer alignment.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace mokd::engine {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MutMap = Eigen::Map<RowMat<T>>;

template <class T>
const T* ptr(const std::shared_ptr<Buffer>& b) {
  return std::get<std::vector<T>>(*b).data();
}
template <class T>
const T* ptr(const Buffer& b) {
  return std::get<std::vector<T>>(b).data();
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw Error(ErrorCode::Usage, std::string(op) + ": mixed dtypes " + to_string(a.dtype()) + " and " +
                                      to_string(b.dtype()));
  }
}

void require_ndim(const Tensor& t, int n, const char* op) {
  if (t.ndim() != n) {
    throw Error(ErrorCode::Shape, std::string(op) + ": expected " + std::to_string(n) + "-d tensor, got " +
                                      to_string(t.shape()));
  }
}

int normalize_axis(int axis, int ndim, const char* op) {
  const int a = axis < 0 ? axis + ndim : axis;
  if (a < 0 || a >= ndim) throw Error(ErrorCode::Shape, std::string(op) + ": axis out of range");
  return a;
}

// Product of dims in [from, to).
std::int64_t span_size(const Shape& s, int from, int to) {
  std::int64_t n = 1;
  for (int i = from; i < to; ++i) n *= s[static_cast<std::size_t>(i)];
  return n;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class BinaryKind { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
  require_same_dtype(a, b, name);
  if (!is_suffix(b.shape(), a.shape())) {
    throw Error(ErrorCode::Shape, std::string(name) + ": cannot broadcast " + to_string(b.shape()) + " onto " +
                                      to_string(a.shape()));
  }
  const std::int64_t n = a.numel();
  const std::int64_t inner = std::max<std::int64_t>(b.numel(), 1);
  Tensor out = make_tensor(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.data<T>().data();
    const T* y = b.data<T>().data();
    T* o = out.mutable_data<T>().data();
    for (std::int64_t i = 0; i < n; ++i) {
      const T yv = y[i % inner];
      switch (kind) {
        case BinaryKind::Add: o[i] = x[i] + yv; break;
        case BinaryKind::Sub: o[i] = x[i] - yv; break;
        case BinaryKind::Mul: o[i] = x[i] * yv; break;
      }
    }
  });
  record(out, name, {a, b},
         [kind, n, inner, av = a.values_ptr(), bv = b.values_ptr(), dt = a.dtype()](const Buffer& g, GradSink& s) {
           dispatch(dt, [&](auto tag) {
             using T = decltype(tag);
             const T* gp = ptr<T>(g);
             if (s.wants(0)) {
               auto ga = s.slot<T>(0);
               const T* y = ptr<T>(bv);
               for (std::int64_t i = 0; i < n; ++i) ga[i] += kind == BinaryKind::Mul ? gp[i] * y[i % inner] : gp[i];
             }
             if (s.wants(1)) {
               auto gb = s.slot<T>(1);
               const T* x = ptr<T>(av);
               for (std::int64_t i = 0; i < n; ++i) {
                 switch (kind) {
                   case BinaryKind::Add: gb[i % inner] += gp[i]; break;
                   case BinaryKind::Sub: gb[i % inner] -= gp[i]; break;
                   case BinaryKind::Mul: gb[i % inner] += gp[i] * x[i]; break;
                 }
               }
             }
           });
         });
  return out;
}

// Elementwise map with derivative expressed through (input, output).
template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
  Tensor out = make_tensor(x.shape(), x.dtype());
  const std::int64_t n = x.numel();
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xp = x.data<T>().data();
    T* o = out.mutable_data<T>().data();
    for (std::int64_t i = 0; i < n; ++i) o[i] = fwd(xp[i]);
  });
  record(out, name, {x}, [n, deriv, xv = x.values_ptr(), yv = out.values_ptr(), dt = x.dtype()](const Buffer& g, GradSink& s) {
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      const T* gp = ptr<T>(g);
      const T* xp = ptr<T>(xv);
      const T* yp = ptr<T>(yv);
      auto gx = s.slot<T>(0);
      for (std::int64_t i = 0; i < n; ++i) gx[i] += gp[i] * deriv(xp[i], yp[i]);
    });
  });
  return out;
}

template <class T>
void im2col(const T* img, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh, std::int64_t kw,
            int stride, int pad, std::int64_t Ho, std::int64_t Wo, T* cols) {
  const std::int64_t plane = Ho * Wo;
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t ky = 0; ky < kh; ++ky) {
      for (std::int64_t kx = 0; kx < kw; ++kx) {
        T* row = cols + ((c * kh + ky) * kw + kx) * plane;
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
          const std::int64_t iy = oy * stride - pad + ky;
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            const std::int64_t ix = ox * stride - pad + kx;
            row[oy * Wo + ox] = (iy >= 0 && iy < H && ix >= 0 && ix < W) ? img[(c * H + iy) * W + ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh, std::int64_t kw,
                int stride, int pad, std::int64_t Ho, std::int64_t Wo, T* img) {
  const std::int64_t plane = Ho * Wo;
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t ky = 0; ky < kh; ++ky) {
      for (std::int64_t kx = 0; kx < kw; ++kx) {
        const T* row = cols + ((c * kh + ky) * kw + kx) * plane;
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
          const std::int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            const std::int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) img[(c * H + iy) * W + ix] += row[oy * Wo + ox];
          }
        }
      }
    }
  }
}

struct ResizeTap {
  std::int64_t i0, i1;
  double w0, w1;
};

std::vector<ResizeTap> resize_taps(std::int64_t in, std::int64_t out) {
  std::vector<ResizeTap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::int64_t i1 = std::min(i0 + 1, in - 1);
    const double l = src - static_cast<double>(i0);
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - l, l};
  }
  return taps;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_ndim(a, 2, "matmul");
  require_ndim(b, 2, "matmul");
  require_same_dtype(a, b, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw Error(ErrorCode::Shape, "matmul: inner dimensions differ: " + to_string(a.shape()) + " x " +
                                      to_string(b.shape()));
  }
  Tensor out = make_tensor({m, n}, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    MutMap<T>(out.mutable_data<T>().data(), m, n).noalias() =
        ConstMap<T>(a.data<T>().data(), m, k) * ConstMap<T>(b.data<T>().data(), k, n);
  });
  record(out, "matmul", {a, b}, [m, k, n, av = a.values_ptr(), bv = b.values_ptr(), dt = a.dtype()](const Buffer& g, GradSink& s) {
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      ConstMap<T> G(ptr<T>(g), m, n);
      if (s.wants(0)) MutMap<T>(s.slot<T>(0).data(), m, k).noalias() += G * ConstMap<T>(ptr<T>(bv), k, n).transpose();
      if (s.wants(1)) MutMap<T>(s.slot<T>(1).data(), k, n).noalias() += ConstMap<T>(ptr<T>(av), m, k).transpose() * G;
    });
  });
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_ndim(a, 3, "bmm");
  require_ndim(b, 3, "bmm");
  require_same_dtype(a, b, "bmm");
  const auto batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const auto n = transpose_b ? b.dim(1) : b.dim(2);
  const auto bk = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != batch || bk != k) {
    throw Error(ErrorCode::Shape, "bmm: incompatible " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor out = make_tensor({batch, m, n}, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* ap = a.data<T>().data();
    const T* bp = b.data<T>().data();
    T* op = out.mutable_data<T>().data();
    for (std::int64_t i = 0; i < batch; ++i) {
      ConstMap<T> A(ap + i * m * k, m, k);
      MutMap<T> O(op + i * m * n, m, n);
      if (transpose_b) {
        O.noalias() = A * ConstMap<T>(bp + i * n * k, n, k).transpose();
      } else {
        O.noalias() = A * ConstMap<T>(bp + i * k * n, k, n);
      }
    }
  });
  record(out, "bmm", {a, b},
         [batch, m, k, n, transpose_b, av = a.values_ptr(), bv = b.values_ptr(), dt = a.dtype()](const Buffer& g, GradSink& s) {
           dispatch(dt, [&](auto tag) {
             using T = decltype(tag);
             const T* gp = ptr<T>(g);
             const T* ap = ptr<T>(av);
             const T* bp = ptr<T>(bv);
             for (std::int64_t i = 0; i < batch; ++i) {
               ConstMap<T> G(gp + i * m * n, m, n);
               ConstMap<T> A(ap + i * m * k, m, k);
               if (transpose_b) {
                 ConstMap<T> B(bp + i * n * k, n, k);
                 if (s.wants(0)) MutMap<T>(s.slot<T>(0).data() + i * m * k, m, k).noalias() += G * B;
                 if (s.wants(1)) MutMap<T>(s.slot<T>(1).data() + i * n * k, n, k).noalias() += G.transpose() * A;
               } else {
                 ConstMap<T> B(bp + i * k * n, k, n);
                 if (s.wants(0)) MutMap<T>(s.slot<T>(0).data() + i * m * k, m, k).noalias() += G * B.transpose();
                 if (s.wants(1)) MutMap<T>(s.slot<T>(1).data() + i * k * n, k, n).noalias() += A.transpose() * G;
               }
             }
           });
         });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_ndim(weight, 2, "linear");
  require_same_dtype(x, weight, "linear");
  const auto in = weight.dim(0), outd = weight.dim(1);
  if (x.ndim() < 1 || x.dim(-1) != in) {
    throw Error(ErrorCode::Shape, "linear: input " + to_string(x.shape()) + " vs weight " + to_string(weight.shape()));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != outd)) {
    throw Error(ErrorCode::Shape, "linear: bias shape " + to_string(bias.shape()));
  }
  const std::int64_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outd;
  Tensor out = make_tensor(out_shape, x.dtype());
  const bool has_bias = bias.defined();
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    MutMap<T> O(out.mutable_data<T>().data(), rows, outd);
    O.noalias() = ConstMap<T>(x.data<T>().data(), rows, in) * ConstMap<T>(weight.data<T>().data(), in, outd);
    if (has_bias) O.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data<T>().data(), outd);
  });
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  record(out, "linear", std::move(inputs),
         [rows, in, outd, has_bias, xv = x.values_ptr(), wv = weight.values_ptr(), dt = x.dtype()](const Buffer& g, GradSink& s) {
           dispatch(dt, [&](auto tag) {
             using T = decltype(tag);
             ConstMap<T> G(ptr<T>(g), rows, outd);
             if (s.wants(0)) {
               MutMap<T>(s.slot<T>(0).data(), rows, in).noalias() += G * ConstMap<T>(ptr<T>(wv), in, outd).transpose();
             }
             if (s.wants(1)) {
               MutMap<T>(s.slot<T>(1).data(), in, outd).noalias() += ConstMap<T>(ptr<T>(xv), rows, in).transpose() * G;
             }
             if (has_bias && s.wants(2)) {
               // Fixed-order loop: Eigen's vectorized reductions peel by address,
               // which makes the rounding depend on allocation alignment.
               T* db = s.slot<T>(2).data();
               const T* gp = ptr<T>(g);
               for (std::int64_t r = 0; r < rows; ++r)
                 for (std::int64_t o = 0; o < outd; ++o) db[o] += gp[r * outd + o];
             }
           });
         });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Mul, "mul"); }

Tensor scale(const Tensor& x, double factor) {
  return dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T f = static_cast<T>(factor);
    return unary(x, "scale", [f](auto v) { return v * f; }, [f](auto, auto) { return f; });
  });
}

Tensor add_scalar(const Tensor& x, double value) {
  return dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T c = static_cast<T>(value);
    return unary(x, "add_scalar", [c](auto v) { return v + c; }, [](auto v, auto) { return decltype(v)(1); });
  });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](auto v) { return v > 0 ? v : decltype(v)(0); },
      [](auto v, auto) { return v > 0 ? decltype(v)(1) : decltype(v)(0); });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, "gelu",
      [](auto v) {
        using T = decltype(v);
        return T(0.5) * v * (T(1) + std::erf(v * T(M_SQRT1_2)));
      },
      [](auto v, auto) {
        using T = decltype(v);
        const T cdf = T(0.5) * (T(1) + std::erf(v * T(M_SQRT1_2)));
        const T pdf = std::exp(T(-0.5) * v * v) * T(0.5 * M_2_SQRTPI * M_SQRT1_2);
        return cdf + v * pdf;
      });
}

Tensor exp(const Tensor& x) {
  return unary(x, "exp", [](auto v) { return std::exp(v); }, [](auto, auto y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, "log", [](auto v) { return std::log(v); }, [](auto v, auto) { return decltype(v)(1) / v; });
}

Tensor sum(const Tensor& x) {
  Tensor out = make_tensor({}, x.dtype());
  const std::int64_t n = x.numel();
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = x.data<T>().data();
    T acc = 0;
    for (std::int64_t i = 0; i < n; ++i) acc += p[i];
    out.mutable_data<T>()[0] = acc;
  });
  record(out, "sum", {x}, [n, dt = x.dtype()](const Buffer& g, GradSink& s) {
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      const T gv = ptr<T>(g)[0];
      auto gx = s.slot<T>(0);
      for (std::int64_t i = 0; i < n; ++i) gx[i] += gv;
    });
  });
  return out;
}

Tensor mean(const Tensor& x) {
  const auto n = x.numel();
  if (n == 0) throw Error(ErrorCode::Usage, "mean of an empty tensor");
  Tensor out = make_tensor({}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = x.data<T>().data();
    T acc = 0;
    for (std::int64_t i = 0; i < n; ++i) acc += p[i];
    out.mutable_data<T>()[0] = acc / static_cast<T>(n);
  });
  record(out, "mean", {x}, [n, dt = x.dtype()](const Buffer& g, GradSink& s) {
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      const T gv = ptr<T>(g)[0] / static_cast<T>(n);
      auto gx = s.slot<T>(0);
      for (std::int64_t i = 0; i < n; ++i) gx[i] += gv;
    });
  });
  return out;
}

Tensor mean_dim(const Tensor& x, int axis) {
  const int a = normalize_axis(axis, x.ndim(), "mean_dim");
  const auto outer = span_size(x.shape(), 0, a);
  const auto d = x.dim(a);
  const auto inner = span_size(x.shape(), a + 1, x.ndim());
  if (d == 0) throw Error(ErrorCode::Usage, "mean_dim over an empty axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + a);
  Tensor out = make_tensor(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = x.data<T>().data();
    T* o = out.mutable_data<T>().data();
    for (std::int64_t i = 0; i < outer; ++i) {
      for (std::int64_t j = 0; j < inner; ++j) {
        T acc = 0;
        for (std::int64_t k = 0; k < d; ++k) acc += p[(i * d + k) * inner + j];
        o[i * inner + j] = acc / static_cast<T>(d);
      }
    }
  });
  record(out, "mean_dim", {x}, [outer, d, inner, dt = x.dtype()](const Buffer& g, GradSink& s) {
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      const T* gp = ptr<T>(g);
      auto gx = s.slot<T>(0);
      for (std::int64_t i = 0; i < outer; ++i)
        for (std::int64_t k = 0; k < d; ++k)
          for (std::int64_t j = 0; j < inner; ++j) gx[(i * d + k) * inner + j] += gp[i * inner + j] / static_cast<T>(d);
    });
  });
  return out;
}

Tensor sum_lastdim(const Tensor& x) {
  if (x.ndim() < 1) throw Error(ErrorCode::Shape, "sum_lastdim on a scalar");
  const auto d = x.dim(-1);
  const auto rows = d == 0 ? 0 : x.numel() / d;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  Tensor out = make_tensor(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = x.data<T>().data();
    T* o = out.mutable_data<T>().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      T acc = 0;
      for (std::int64_t k = 0; k < d; ++k) acc += p[r * d + k];
      o[r] = acc;
    }
  });
  record(out, "sum_lastdim", {x}, [rows, d, dt = x.dtype()](const Buffer& g, GradSink& s) {
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      const T* gp = ptr<T>(g);
      auto gx = s.slot<T>(0);
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t k = 0; k < d; ++k) gx[r * d + k] += gp[r];
    });
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw Error(ErrorCode::Shape, "reshape: more than one inferred dimension");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    if (known == 0 || x.numel() % known != 0) throw Error(ErrorCode::Shape, "reshape: cannot infer dimension");
    shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  }
  Tensor out = make_view(x, std::move(shape));
  record(out, "reshape", {x}, [dt = x.dtype()](const Buffer& g, GradSink& s) {
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      const auto& gv = std::get<std::vector<T>>(g);
      auto gx = s.slot<T>(0);
      for (std::size_t i = 0; i < gv.size(); ++i) gx[i] += gv[i];
    });
  });
  return out;
}

namespace {

// out[idx] = in[permuted idx]; when `scatter` is set the copy runs the other
// way and accumulates (used by the backward pass).
template <class T>
void permute_copy(const T* src, T* dst, const Shape& in_shape, const std::vector<int>& order, bool scatter) {
  const int nd = static_cast<int>(in_shape.size());
  std::vector<std::int64_t> in_strides(static_cast<std::size_t>(nd), 1);
  for (int i = nd - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  Shape out_shape(static_cast<std::size_t>(nd));
  std::vector<std::int64_t> stride_of_out(static_cast<std::size_t>(nd));
  for (int i = 0; i < nd; ++i) {
    out_shape[i] = in_shape[order[i]];
    stride_of_out[i] = in_strides[order[i]];
  }
  const std::int64_t n = numel(in_shape);
  std::vector<std::int64_t> counter(static_cast<std::size_t>(nd), 0);
  std::int64_t in_off = 0;
  for (std::int64_t o = 0; o < n; ++o) {
    if (scatter) {
      dst[in_off] += src[o];
    } else {
      dst[o] = src[in_off];
    }
    for (int ax = nd - 1; ax >= 0; --ax) {
      if (++counter[ax] < out_shape[ax]) {
        in_off += stride_of_out[ax];
        break;
      }
      in_off -= stride_of_out[ax] * (out_shape[ax] - 1);
      counter[ax] = 0;
    }
  }
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& order) {
  const int nd = x.ndim();
  if (static_cast<int>(order.size()) != nd) throw Error(ErrorCode::Shape, "permute: order rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(nd), false);
  for (int o : order) {
    if (o < 0 || o >= nd || seen[o]) throw Error(ErrorCode::Shape, "permute: invalid axis order");
    seen[o] = true;
  }
  Shape out_shape(static_cast<std::size_t>(nd));
  for (int i = 0; i < nd; ++i) out_shape[i] = x.shape()[order[i]];
  Tensor out = make_tensor(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    permute_copy<T>(x.data<T>().data(), out.mutable_data<T>().data(), x.shape(), order, false);
  });
  record(out, "permute", {x}, [in_shape = x.shape(), order, dt = x.dtype()](const Buffer& g, GradSink& s) {
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      permute_copy<T>(ptr<T>(g), s.slot<T>(0).data(), in_shape, order, true);
    });
  });
  return out;
}

Tensor transpose(const Tensor& x, int axis0, int axis1) {
  const int nd = x.ndim();
  std::vector<int> order(static_cast<std::size_t>(nd));
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[normalize_axis(axis0, nd, "transpose")], order[normalize_axis(axis1, nd, "transpose")]);
  return permute(x, order);
}

Tensor narrow(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
  const int a = normalize_axis(axis, x.ndim(), "narrow");
  const auto d = x.dim(a);
  if (start < 0 || length < 0 || start + length > d) throw Error(ErrorCode::Shape, "narrow: range out of bounds");
  const auto outer = span_size(x.shape(), 0, a);
  const auto inner = span_size(x.shape(), a + 1, x.ndim());
  Shape out_shape = x.shape();
  out_shape[a] = length;
  Tensor out = make_tensor(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = x.data<T>().data();
    T* o = out.mutable_data<T>().data();
    for (std::int64_t i = 0; i < outer; ++i)
      std::copy_n(p + (i * d + start) * inner, length * inner, o + i * length * inner);
  });
  record(out, "narrow", {x}, [outer, d, inner, start, length, dt = x.dtype()](const Buffer& g, GradSink& s) {
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      const T* gp = ptr<T>(g);
      T* gx = s.slot<T>(0).data();
      for (std::int64_t i = 0; i < outer; ++i)
        for (std::int64_t j = 0; j < length * inner; ++j) gx[(i * d + start) * inner + j] += gp[i * length * inner + j];
    });
  });
  return out;
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw Error(ErrorCode::Usage, "concat of no tensors");
  const Tensor& first = parts.front();
  const int a = normalize_axis(axis, first.ndim(), "concat");
  std::vector<std::int64_t> sizes;
  std::int64_t total = 0;
  for (const auto& p : parts) {
    require_same_dtype(first, p, "concat");
    if (p.ndim() != first.ndim()) throw Error(ErrorCode::Shape, "concat: rank mismatch");
    for (int i = 0; i < first.ndim(); ++i) {
      if (i != a && p.dim(i) != first.dim(i)) {
        throw Error(ErrorCode::Shape, "concat: " + to_string(p.shape()) + " vs " + to_string(first.shape()));
      }
    }
    sizes.push_back(p.dim(a));
    total += p.dim(a);
  }
  const auto outer = span_size(first.shape(), 0, a);
  const auto inner = span_size(first.shape(), a + 1, first.ndim());
  Shape out_shape = first.shape();
  out_shape[a] = total;
  Tensor out = make_tensor(out_shape, first.dtype());
  dispatch(first.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* o = out.mutable_data<T>().data();
    std::int64_t offset = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
      const T* p = parts[pi].template data<T>().data();
      const auto len = sizes[pi];
      for (std::int64_t i = 0; i < outer; ++i)
        std::copy_n(p + i * len * inner, len * inner, o + (i * total + offset) * inner);
      offset += len;
    }
  });
  record(out, "concat", std::vector<Tensor>(parts.begin(), parts.end()),
         [outer, inner, total, sizes, dt = first.dtype()](const Buffer& g, GradSink& s) {
           dispatch(dt, [&](auto tag) {
             using T = decltype(tag);
             const T* gp = ptr<T>(g);
             std::int64_t offset = 0;
             for (std::size_t pi = 0; pi < sizes.size(); ++pi) {
               const auto len = sizes[pi];
               if (s.wants(pi)) {
                 T* gx = s.slot<T>(pi).data();
                 for (std::int64_t i = 0; i < outer; ++i)
                   for (std::int64_t j = 0; j < len * inner; ++j) gx[i * len * inner + j] += gp[(i * total + offset) * inner + j];
               }
               offset += len;
             }
           });
         });
  return out;
}

Tensor softmax_lastdim(const Tensor& x, double temperature) {
  if (!(temperature > 0)) throw Error(ErrorCode::Parameter, "softmax temperature must be positive");
  if (x.ndim() < 1) throw Error(ErrorCode::Shape, "softmax of a scalar");
  const auto k = x.dim(-1);
  const auto rows = k == 0 ? 0 : x.numel() / k;
  Tensor out = make_tensor(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T inv_t = T(1) / static_cast<T>(temperature);
    const T* p = x.data<T>().data();
    T* o = out.mutable_data<T>().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* row = p + r * k;
      T* orow = o + r * k;
      const T mx = *std::max_element(row, row + k);
      T z = 0;
      for (std::int64_t j = 0; j < k; ++j) {
        orow[j] = std::exp((row[j] - mx) * inv_t);
        z += orow[j];
      }
      for (std::int64_t j = 0; j < k; ++j) orow[j] /= z;
    }
  });
  record(out, "softmax", {x}, [rows, k, temperature, yv = out.values_ptr(), dt = x.dtype()](const Buffer& g, GradSink& s) {
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      const T inv_t = T(1) / static_cast<T>(temperature);
      const T* gp = ptr<T>(g);
      const T* y = ptr<T>(yv);
      T* gx = s.slot<T>(0).data();
      for (std::int64_t r = 0; r < rows; ++r) {
        T dot = 0;
        for (std::int64_t j = 0; j < k; ++j) dot += gp[r * k + j] * y[r * k + j];
        for (std::int64_t j = 0; j < k; ++j) gx[r * k + j] += y[r * k + j] * (gp[r * k + j] - dot) * inv_t;
      }
    });
  });
  return out;
}

Tensor log_softmax_lastdim(const Tensor& x, double temperature) {
  if (!(temperature > 0)) throw Error(ErrorCode::Parameter, "softmax temperature must be positive");
  if (x.ndim() < 1) throw Error(ErrorCode::Shape, "log_softmax of a scalar");
  const auto k = x.dim(-1);
  const auto rows = k == 0 ? 0 : x.numel() / k;
  Tensor out = make_tensor(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T inv_t = T(1) / static_cast<T>(temperature);
    const T* p = x.data<T>().data();
    T* o = out.mutable_data<T>().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* row = p + r * k;
      T* orow = o + r * k;
      const T mx = *std::max_element(row, row + k);
      T z = 0;
      for (std::int64_t j = 0; j < k; ++j) {
        orow[j] = (row[j] - mx) * inv_t;
        z += std::exp(orow[j]);
      }
      const T lz = std::log(z);
      for (std::int64_t j = 0; j < k; ++j) orow[j] -= lz;
    }
  });
  record(out, "log_softmax", {x}, [rows, k, temperature, yv = out.values_ptr(), dt = x.dtype()](const Buffer& g, GradSink& s) {
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      const T inv_t = T(1) / static_cast<T>(temperature);
      const T* gp = ptr<T>(g);
      const T* y = ptr<T>(yv);
      T* gx = s.slot<T>(0).data();
      for (std::int64_t r = 0; r < rows; ++r) {
        T gsum = 0;
        for (std::int64_t j = 0; j < k; ++j) gsum += gp[r * k + j];
        for (std::int64_t j = 0; j < k; ++j) gx[r * k + j] += (gp[r * k + j] - std::exp(y[r * k + j]) * gsum) * inv_t;
      }
    });
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_same_dtype(x, gamma, "layer_norm");
  require_same_dtype(x, beta, "layer_norm");
  const auto c = x.dim(-1);
  if (gamma.numel() != c || beta.numel() != c) throw Error(ErrorCode::Shape, "layer_norm: affine size mismatch");
  const auto rows = c == 0 ? 0 : x.numel() / c;
  Tensor out = make_tensor(x.shape(), x.dtype());
  auto stats = std::make_shared<Buffer>(dispatch(x.dtype(), [&](auto tag) -> Buffer {
    using T = decltype(tag);
    return std::vector<T>(static_cast<std::size_t>(2 * rows));
  }));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = x.data<T>().data();
    const T* gm = gamma.data<T>().data();
    const T* bt = beta.data<T>().data();
    T* o = out.mutable_data<T>().data();
    auto& st = std::get<std::vector<T>>(*stats);
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* row = p + r * c;
      T mu = 0;
      for (std::int64_t j = 0; j < c; ++j) mu += row[j];
      mu /= static_cast<T>(c);
      T var = 0;
      for (std::int64_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= static_cast<T>(c);
      const T rstd = T(1) / std::sqrt(var + static_cast<T>(eps));
      st[2 * r] = mu;
      st[2 * r + 1] = rstd;
      for (std::int64_t j = 0; j < c; ++j) o[r * c + j] = (row[j] - mu) * rstd * gm[j] + bt[j];
    }
  });
  record(out, "layer_norm", {x, gamma, beta},
         [rows, c, stats, xv = x.values_ptr(), gv = gamma.values_ptr(), dt = x.dtype()](const Buffer& g, GradSink& s) {
           dispatch(dt, [&](auto tag) {
             using T = decltype(tag);
             const T* gp = ptr<T>(g);
             const T* p = ptr<T>(xv);
             const T* gm = ptr<T>(gv);
             const auto& st = std::get<std::vector<T>>(*stats);
             std::vector<T> xhat(static_cast<std::size_t>(c)), dxhat(static_cast<std::size_t>(c));
             for (std::int64_t r = 0; r < rows; ++r) {
               const T mu = st[2 * r], rstd = st[2 * r + 1];
               T m1 = 0, m2 = 0;
               for (std::int64_t j = 0; j < c; ++j) {
                 xhat[j] = (p[r * c + j] - mu) * rstd;
                 dxhat[j] = gp[r * c + j] * gm[j];
                 m1 += dxhat[j];
                 m2 += dxhat[j] * xhat[j];
               }
               m1 /= static_cast<T>(c);
               m2 /= static_cast<T>(c);
               if (s.wants(0)) {
                 T* gx = s.slot<T>(0).data() + r * c;
                 for (std::int64_t j = 0; j < c; ++j) gx[j] += rstd * (dxhat[j] - m1 - xhat[j] * m2);
               }
               if (s.wants(1)) {
                 T* gg = s.slot<T>(1).data();
                 for (std::int64_t j = 0; j < c; ++j) gg[j] += gp[r * c + j] * xhat[j];
               }
               if (s.wants(2)) {
                 T* gb = s.slot<T>(2).data();
                 for (std::int64_t j = 0; j < c; ++j) gb[j] += gp[r * c + j];
               }
             }
           });
         });
  return out;
}

Tensor l2_normalize_lastdim(const Tensor& x, double eps) {
  const auto c = x.dim(-1);
  const auto rows = c == 0 ? 0 : x.numel() / c;
  Tensor out = make_tensor(x.shape(), x.dtype());
  auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = x.data<T>().data();
    T* o = out.mutable_data<T>().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      T ss = 0;
      for (std::int64_t j = 0; j < c; ++j) ss += p[r * c + j] * p[r * c + j];
      const T nrm = std::max(std::sqrt(ss), static_cast<T>(eps));
      (*norms)[r] = static_cast<double>(nrm);
      for (std::int64_t j = 0; j < c; ++j) o[r * c + j] = p[r * c + j] / nrm;
    }
  });
  record(out, "l2_normalize", {x}, [rows, c, eps, norms, yv = out.values_ptr(), dt = x.dtype()](const Buffer& g, GradSink& s) {
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      const T* gp = ptr<T>(g);
      const T* y = ptr<T>(yv);
      T* gx = s.slot<T>(0).data();
      for (std::int64_t r = 0; r < rows; ++r) {
        const T nrm = static_cast<T>((*norms)[r]);
        if ((*norms)[r] <= eps) {
          for (std::int64_t j = 0; j < c; ++j) gx[r * c + j] += gp[r * c + j] / nrm;
          continue;
        }
        T dot = 0;
        for (std::int64_t j = 0; j < c; ++j) dot += gp[r * c + j] * y[r * c + j];
        for (std::int64_t j = 0; j < c; ++j) gx[r * c + j] += (gp[r * c + j] - y[r * c + j] * dot) / nrm;
      }
    });
  });
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int padding) {
  require_ndim(input, 4, "conv2d");
  require_ndim(kernel, 4, "conv2d");
  require_same_dtype(input, kernel, "conv2d");
  if (stride < 1 || padding < 0) throw Error(ErrorCode::Parameter, "conv2d: invalid stride or padding");
  const auto B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const auto F = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != C) {
    throw Error(ErrorCode::Shape, "conv2d: kernel " + to_string(kernel.shape()) + " vs input " + to_string(input.shape()));
  }
  const auto ph = H + 2 * padding, pw = W + 2 * padding;
  if (kh > ph || kw > pw) throw Error(ErrorCode::Shape, "conv2d: kernel larger than padded input");
  if ((ph - kh) % stride != 0 || (pw - kw) % stride != 0) {
    throw Error(ErrorCode::Shape, "conv2d: non-integer output size for input " + to_string(input.shape()) +
                                      " with stride " + std::to_string(stride));
  }
  const auto Ho = (ph - kh) / stride + 1, Wo = (pw - kw) / stride + 1;
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != F) throw Error(ErrorCode::Shape, "conv2d: bias size mismatch");
  const auto ckk = C * kh * kw, plane = Ho * Wo;
  Tensor out = make_tensor({B, F, Ho, Wo}, input.dtype());
  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> cols(static_cast<std::size_t>(ckk * plane));
    const T* x = input.data<T>().data();
    ConstMap<T> Wm(kernel.data<T>().data(), F, ckk);
    T* o = out.mutable_data<T>().data();
    for (std::int64_t b = 0; b < B; ++b) {
      im2col(x + b * C * H * W, C, H, W, kh, kw, stride, padding, Ho, Wo, cols.data());
      MutMap<T> O(o + b * F * plane, F, plane);
      O.noalias() = Wm * ConstMap<T>(cols.data(), ckk, plane);
      if (has_bias) O.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.data<T>().data(), F);
    }
  });
  std::vector<Tensor> inputs{input, kernel};
  if (has_bias) inputs.push_back(bias);
  record(out, "conv2d", std::move(inputs),
         [=, xv = input.values_ptr(), wv = kernel.values_ptr(), dt = input.dtype()](const Buffer& g, GradSink& s) {
           dispatch(dt, [&](auto tag) {
             using T = decltype(tag);
             std::vector<T> cols(static_cast<std::size_t>(ckk * plane));
             std::vector<T> dcols(static_cast<std::size_t>(ckk * plane));
             const T* x = ptr<T>(xv);
             const T* gp = ptr<T>(g);
             ConstMap<T> Wm(ptr<T>(wv), F, ckk);
             for (std::int64_t b = 0; b < B; ++b) {
               ConstMap<T> G(gp + b * F * plane, F, plane);
               if (s.wants(1)) {
                 im2col(x + b * C * H * W, C, H, W, kh, kw, stride, padding, Ho, Wo, cols.data());
                 MutMap<T>(s.slot<T>(1).data(), F, ckk).noalias() += G * ConstMap<T>(cols.data(), ckk, plane).transpose();
               }
               if (has_bias && s.wants(2)) {
                 T* db = s.slot<T>(2).data();
                 const T* gb = gp + b * F * plane;
                 for (std::int64_t f = 0; f < F; ++f) {
                   T acc = 0;
                   for (std::int64_t k = 0; k < plane; ++k) acc += gb[f * plane + k];
                   db[f] += acc;
                 }
               }
               if (s.wants(0)) {
                 MutMap<T>(dcols.data(), ckk, plane).noalias() = Wm.transpose() * G;
                 col2im_add(dcols.data(), C, H, W, kh, kw, stride, padding, Ho, Wo, s.slot<T>(0).data() + b * C * H * W);
               }
             }
           });
         });
  return out;
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups, double eps) {
  if (x.ndim() < 2) throw Error(ErrorCode::Shape, "group_norm: expected [B, C, ...]");
  require_same_dtype(x, gamma, "group_norm");
  require_same_dtype(x, beta, "group_norm");
  const auto B = x.dim(0), C = x.dim(1);
  const auto S = span_size(x.shape(), 2, x.ndim());
  if (groups < 1 || C % groups != 0) {
    throw Error(ErrorCode::Config, "group_norm: " + std::to_string(groups) + " groups do not divide " +
                                       std::to_string(C) + " channels");
  }
  if (gamma.numel() != C || beta.numel() != C) throw Error(ErrorCode::Shape, "group_norm: affine size mismatch");
  const auto cg = C / groups;
  const auto m = cg * S;
  Tensor out = make_tensor(x.shape(), x.dtype());
  auto stats = std::make_shared<std::vector<double>>(static_cast<std::size_t>(2 * B * groups));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = x.data<T>().data();
    const T* gm = gamma.data<T>().data();
    const T* bt = beta.data<T>().data();
    T* o = out.mutable_data<T>().data();
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t gi = 0; gi < groups; ++gi) {
        const std::int64_t base = (b * C + gi * cg) * S;
        T mu = 0;
        for (std::int64_t j = 0; j < m; ++j) mu += p[base + j];
        mu /= static_cast<T>(m);
        T var = 0;
        for (std::int64_t j = 0; j < m; ++j) var += (p[base + j] - mu) * (p[base + j] - mu);
        var /= static_cast<T>(m);
        const T rstd = T(1) / std::sqrt(var + static_cast<T>(eps));
        (*stats)[2 * (b * groups + gi)] = static_cast<double>(mu);
        (*stats)[2 * (b * groups + gi) + 1] = static_cast<double>(rstd);
        for (std::int64_t j = 0; j < m; ++j) {
          const auto ch = gi * cg + j / S;
          o[base + j] = (p[base + j] - mu) * rstd * gm[ch] + bt[ch];
        }
      }
    }
  });
  record(out, "group_norm", {x, gamma, beta},
         [=, xv = x.values_ptr(), gv = gamma.values_ptr(), dt = x.dtype()](const Buffer& g, GradSink& s) {
           dispatch(dt, [&](auto tag) {
             using T = decltype(tag);
             const T* gp = ptr<T>(g);
             const T* p = ptr<T>(xv);
             const T* gm = ptr<T>(gv);
             std::vector<T> xhat(static_cast<std::size_t>(m)), dxhat(static_cast<std::size_t>(m));
             for (std::int64_t b = 0; b < B; ++b) {
               for (std::int64_t gi = 0; gi < groups; ++gi) {
                 const std::int64_t base = (b * C + gi * cg) * S;
                 const T mu = static_cast<T>((*stats)[2 * (b * groups + gi)]);
                 const T rstd = static_cast<T>((*stats)[2 * (b * groups + gi) + 1]);
                 T m1 = 0, m2 = 0;
                 for (std::int64_t j = 0; j < m; ++j) {
                   const auto ch = gi * cg + j / S;
                   xhat[j] = (p[base + j] - mu) * rstd;
                   dxhat[j] = gp[base + j] * gm[ch];
                   m1 += dxhat[j];
                   m2 += dxhat[j] * xhat[j];
                 }
                 m1 /= static_cast<T>(m);
                 m2 /= static_cast<T>(m);
                 if (s.wants(0)) {
                   T* gx = s.slot<T>(0).data() + base;
                   for (std::int64_t j = 0; j < m; ++j) gx[j] += rstd * (dxhat[j] - m1 - xhat[j] * m2);
                 }
                 if (s.wants(1) || s.wants(2)) {
                   for (std::int64_t j = 0; j < m; ++j) {
                     const auto ch = gi * cg + j / S;
                     if (s.wants(1)) s.slot<T>(1)[ch] += gp[base + j] * xhat[j];
                     if (s.wants(2)) s.slot<T>(2)[ch] += gp[base + j];
                   }
                 }
               }
             }
           });
         });
  return out;
}

Tensor bilinear_resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  if (x.ndim() < 2) throw Error(ErrorCode::Shape, "bilinear_resize: expected [..., H, W]");
  if (out_h < 1 || out_w < 1) throw Error(ErrorCode::Shape, "bilinear_resize: empty output");
  const auto H = x.dim(-2), W = x.dim(-1);
  const auto planes = x.numel() / (H * W);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = out_h;
  out_shape[out_shape.size() - 1] = out_w;
  auto ty = resize_taps(H, out_h);
  auto tx = resize_taps(W, out_w);
  Tensor out = make_tensor(out_shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = x.data<T>().data();
    T* o = out.mutable_data<T>().data();
    for (std::int64_t pl = 0; pl < planes; ++pl) {
      const T* src = p + pl * H * W;
      T* dst = o + pl * out_h * out_w;
      for (std::int64_t i = 0; i < out_h; ++i) {
        const auto& a = ty[i];
        for (std::int64_t j = 0; j < out_w; ++j) {
          const auto& b = tx[j];
          dst[i * out_w + j] = static_cast<T>(a.w0 * (b.w0 * src[a.i0 * W + b.i0] + b.w1 * src[a.i0 * W + b.i1]) +
                                              a.w1 * (b.w0 * src[a.i1 * W + b.i0] + b.w1 * src[a.i1 * W + b.i1]));
        }
      }
    }
  });
  record(out, "bilinear_resize", {x}, [=, dt = x.dtype()](const Buffer& g, GradSink& s) {
    dispatch(dt, [&](auto tag) {
      using T = decltype(tag);
      const T* gp = ptr<T>(g);
      T* gx = s.slot<T>(0).data();
      for (std::int64_t pl = 0; pl < planes; ++pl) {
        const T* gsrc = gp + pl * out_h * out_w;
        T* gdst = gx + pl * H * W;
        for (std::int64_t i = 0; i < out_h; ++i) {
          const auto& a = ty[i];
          for (std::int64_t j = 0; j < out_w; ++j) {
            const auto& b = tx[j];
            const double gv = gsrc[i * out_w + j];
            gdst[a.i0 * W + b.i0] += static_cast<T>(gv * a.w0 * b.w0);
            gdst[a.i0 * W + b.i1] += static_cast<T>(gv * a.w0 * b.w1);
            gdst[a.i1 * W + b.i0] += static_cast<T>(gv * a.w1 * b.w0);
            gdst[a.i1 * W + b.i1] += static_cast<T>(gv * a.w1 * b.w1);
          }
        }
      }
    });
  });
  return out;
}

}  // namespace mokd::engine
