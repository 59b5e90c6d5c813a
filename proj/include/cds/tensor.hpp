#pragma once

// Tape-based reverse-mode autodiff. A Tape records one primitive per node in
// creation order (which is a topological order by construction); backward()
// replays the records in reverse. Tensors are cheap handles onto shared
// Storage, so parameters can live outside any tape and be re-attached as
// leaves every step while their accumulated gradients persist.
//
// Training runs in float; tests instantiate the same templates with double
// for finite-difference gradient checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "cds/common.hpp"
#include "cds/kernels.hpp"

namespace cds {

template <typename T>
struct Storage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily, only when requires_grad
  bool requires_grad = false;

  long numel() const { return static_cast<long>(data.size()); }

  void ensure_grad() {
    if (requires_grad && grad.size() != data.size()) grad.assign(data.size(), T(0));
  }

  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
using StoragePtr = std::shared_ptr<Storage<T>>;

template <typename T>
StoragePtr<T> make_storage(Shape shape, std::vector<T> data, bool requires_grad = false) {
  if (numel(shape) != static_cast<long>(data.size()))
    throw DimensionError("storage: shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  auto s = std::make_shared<Storage<T>>();
  s->shape = std::move(shape);
  s->data = std::move(data);
  s->requires_grad = requires_grad;
  s->ensure_grad();
  return s;
}

template <typename T>
StoragePtr<T> make_storage(Shape shape, bool requires_grad = false) {
  auto s = std::make_shared<Storage<T>>();
  s->data.assign(numel(shape), T(0));
  s->shape = std::move(shape);
  s->requires_grad = requires_grad;
  s->ensure_grad();
  return s;
}

template <typename T>
class Tape;

template <typename T>
class Tensor {
public:
  Tensor() = default;

  const Shape& shape() const { return st_->shape; }
  int ndim() const { return static_cast<int>(st_->shape.size()); }
  int dim(int i) const { return st_->shape[static_cast<size_t>(i)]; }
  long numel() const { return st_->numel(); }
  bool requires_grad() const { return st_->requires_grad; }
  bool defined() const { return st_ != nullptr; }

  const std::vector<T>& values() const { return st_->data; }
  const std::vector<T>& grad() const { return st_->grad; }

  T item() const {
    if (numel() != 1)
      throw DimensionError("item(): tensor has shape " + shape_str(shape()));
    return st_->data[0];
  }

  StoragePtr<T> storage() const { return st_; }
  Tape<T>* tape() const { return tape_; }

private:
  friend class Tape<T>;
  Tensor(StoragePtr<T> st, Tape<T>* tape) : st_(std::move(st)), tape_(tape) {}

  StoragePtr<T> st_;
  Tape<T>* tape_ = nullptr;
};

template <typename T>
class Tape {
public:
  // Attach persistent storage (e.g. a parameter) as a leaf of this tape.
  Tensor<T> leaf(StoragePtr<T> st) {
    st->ensure_grad();
    return Tensor<T>(std::move(st), this);
  }

  // Constant value, never differentiated.
  Tensor<T> constant(Shape shape, std::vector<T> data) {
    return Tensor<T>(make_storage<T>(std::move(shape), std::move(data), false), this);
  }

  Tensor<T> constant_scalar(T v) { return constant({1}, {v}); }

  // Fresh differentiable leaf (used by tests and head-free probes).
  Tensor<T> variable(Shape shape, std::vector<T> data) {
    return Tensor<T>(make_storage<T>(std::move(shape), std::move(data), true), this);
  }

  Tensor<T> fresh(Shape shape, bool requires_grad) {
    auto st = make_storage<T>(std::move(shape), requires_grad);
    return Tensor<T>(std::move(st), this);
  }

  void record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
  }

  size_t num_ops() const { return ops_.size(); }

  // Reverse sweep from a scalar loss. Leaves not on a path to the loss keep
  // zero gradients because nothing ever seeds them.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1)
      throw DimensionError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;
    auto st = loss.storage();
    st->ensure_grad();
    st->grad[0] += T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

private:
  std::vector<std::function<void()>> ops_;
};

namespace detail {

template <typename T>
inline Tape<T>* op_tape(const Tensor<T>& a) {
  if (a.tape() == nullptr) throw Error("tensor is not bound to a tape");
  return a.tape();
}

template <typename T>
inline Tape<T>* op_tape(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T>* t = op_tape(a);
  if (t != b.tape()) throw Error("operands belong to different tapes");
  return t;
}

template <typename T>
inline bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  auto* tape = detail::op_tape(a, b);
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor<T> out = tape->fresh({m, n}, rg);
  kernels::matmul(a.values().data(), b.values().data(), out.storage()->data.data(),
                  m, k, n, false, false, false);
  if (rg) {
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    tape->record([as, bs, os, m, k, n] {
      const T* g = os->grad.data();
      if (as->requires_grad)
        kernels::matmul(g, bs->data.data(), as->grad.data(), m, n, k, false, true, true);
      if (bs->requires_grad)
        kernels::matmul(as->data.data(), g, bs->grad.data(), k, m, n, true, false, true);
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  auto* tape = detail::op_tape(x);
  if (x.ndim() != 2)
    throw DimensionError("transpose: expected 2-d tensor, got " + shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  Tensor<T> out = tape->fresh({n, m}, x.requires_grad());
  const auto& xv = x.values();
  auto& ov = out.storage()->data;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) ov[static_cast<long>(j) * m + i] = xv[static_cast<long>(i) * n + j];
  if (x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record([xs, os, m, n] {
      const T* g = os->grad.data();
      T* dx = xs->grad.data();
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) dx[static_cast<long>(i) * n + j] += g[static_cast<long>(j) * m + i];
    });
  }
  return out;
}

// y = x * W^T + bias, the fully connected layer primitive.
// x: [n x in], w: [out x in], bias: [out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  auto* tape = detail::op_tape(x, w);
  if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1))
    throw DimensionError("linear: incompatible shapes " + shape_str(x.shape()) +
                         " and " + shape_str(w.shape()));
  if (bias.numel() != w.dim(0))
    throw DimensionError("linear: bias " + shape_str(bias.shape()) +
                         " does not match output dim " + std::to_string(w.dim(0)));
  const int n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  bool rg = x.requires_grad() || w.requires_grad() || bias.requires_grad();
  Tensor<T> out = tape->fresh({n, out_dim}, rg);
  kernels::matmul(x.values().data(), w.values().data(), out.storage()->data.data(),
                  n, in, out_dim, false, true, false);
  {
    auto& ov = out.storage()->data;
    const auto& bv = bias.values();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out_dim; ++j) ov[static_cast<long>(i) * out_dim + j] += bv[j];
  }
  if (rg) {
    auto xs = x.storage(), ws = w.storage(), bs = bias.storage(), os = out.storage();
    tape->record([xs, ws, bs, os, n, in, out_dim] {
      const T* g = os->grad.data();
      if (xs->requires_grad)
        kernels::matmul(g, ws->data.data(), xs->grad.data(), n, out_dim, in, false, false, true);
      if (ws->requires_grad)
        kernels::matmul(g, xs->data.data(), ws->grad.data(), out_dim, n, in, true, false, true);
      if (bs->requires_grad) {
        T* db = bs->grad.data();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < out_dim; ++j) db[j] += g[static_cast<long>(i) * out_dim + j];
      }
    });
  }
  return out;
}

// Cross-correlation with zero padding; x: [n x c x h x w], w: [o x c x kh x kw].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad) {
  auto* tape = detail::op_tape(x, w);
  if (x.ndim() != 4 || w.ndim() != 4)
    throw DimensionError("conv2d: expected 4-d input and kernel, got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
  if (x.dim(1) != w.dim(1))
    throw DimensionError("conv2d: channel mismatch between input " + shape_str(x.shape()) +
                         " and kernel " + shape_str(w.shape()));
  if (stride < 1) throw DimensionError("conv2d: stride must be positive");
  if (pad < 0) throw DimensionError("conv2d: pad must be non-negative");
  kernels::Conv2dDims d;
  d.n = x.dim(0); d.c = x.dim(1); d.h = x.dim(2); d.w = x.dim(3);
  d.o = w.dim(0); d.kh = w.dim(2); d.kw = w.dim(3);
  d.stride = stride; d.pad = pad;
  if (d.kh > d.h + 2 * pad || d.kw > d.w + 2 * pad)
    throw DimensionError("conv2d: kernel " + shape_str(w.shape()) +
                         " larger than padded input " + shape_str(x.shape()));
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  bool rg = x.requires_grad() || w.requires_grad();
  Tensor<T> out = tape->fresh({d.n, d.o, d.ho, d.wo}, rg);
  kernels::conv2d_forward(x.values().data(), w.values().data(),
                          out.storage()->data.data(), d);
  if (rg) {
    auto xs = x.storage(), ws = w.storage(), os = out.storage();
    tape->record([xs, ws, os, d] {
      const T* g = os->grad.data();
      if (xs->requires_grad)
        kernels::conv2d_dinput(g, ws->data.data(), xs->grad.data(), d);
      if (ws->requires_grad)
        kernels::conv2d_dweight(g, xs->data.data(), ws->grad.data(), d);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch normalization

// Train mode normalizes by biased batch statistics and updates the running
// buffers in place with the given momentum; eval mode reads the buffers.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      StoragePtr<T> running_mean, StoragePtr<T> running_var,
                      T momentum, T eps, bool train) {
  auto* tape = detail::op_tape(x);
  if (x.ndim() != 4)
    throw DimensionError("batchnorm2d: expected 4-d input, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (n == 0) throw DimensionError("batchnorm2d: zero batch");
  if (gamma.numel() != c || beta.numel() != c)
    throw DimensionError("batchnorm2d: gamma/beta must have length " + std::to_string(c));
  std::vector<T> mean(c), var(c);
  if (train) {
    kernels::bn2d_stats(x.values().data(), n, c, hw, mean.data(), var.data());
    for (int j = 0; j < c; ++j) {
      running_mean->data[j] = (T(1) - momentum) * running_mean->data[j] + momentum * mean[j];
      running_var->data[j] = (T(1) - momentum) * running_var->data[j] + momentum * var[j];
    }
  } else {
    mean = running_mean->data;
    var = running_var->data;
  }
  std::vector<T> inv_std(c);
  for (int j = 0; j < c; ++j) inv_std[j] = T(1) / std::sqrt(var[j] + eps);

  bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  Tensor<T> out = tape->fresh(x.shape(), rg);
  kernels::bn2d_apply(x.values().data(), gamma.values().data(), beta.values().data(),
                      mean.data(), inv_std.data(), out.storage()->data.data(), n, c, hw);
  if (rg) {
    auto xs = x.storage(), gs = gamma.storage(), bs = beta.storage(), os = out.storage();
    tape->record([xs, gs, bs, os, mean, inv_std, n, c, hw, train] {
      const T* g = os->grad.data();
      std::vector<T> sum_g(c), sum_gx(c);
      kernels::bn2d_reduce(g, xs->data.data(), mean.data(), inv_std.data(),
                           sum_g.data(), sum_gx.data(), n, c, hw);
      if (gs->requires_grad)
        for (int j = 0; j < c; ++j) gs->grad[j] += sum_gx[j];
      if (bs->requires_grad)
        for (int j = 0; j < c; ++j) bs->grad[j] += sum_g[j];
      if (xs->requires_grad)
        kernels::bn2d_dinput(g, xs->data.data(), gs->data.data(), mean.data(),
                             inv_std.data(), sum_g.data(), sum_gx.data(), train,
                             xs->grad.data(), n, c, hw);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise suite

namespace detail {

// Shared driver for ops between identical shapes or tensor-vs-scalar.
template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b,
                    FwdFn fwd, BwdFn bwd) {
  auto* tape = op_tape(a, b);
  const bool a_scalar = a.numel() == 1, b_scalar = b.numel() == 1;
  if (!same_shape(a, b) && !a_scalar && !b_scalar)
    throw DimensionError(std::string(name) + ": shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) +
                         " are neither identical nor scalar-vs-tensor");
  const Shape& out_shape = b_scalar || same_shape(a, b) ? a.shape() : b.shape();
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor<T> out = tape->fresh(out_shape, rg);
  auto& ov = out.storage()->data;
  const auto& av = a.values();
  const auto& bv = b.values();
  const long len = out.numel();
  for (long i = 0; i < len; ++i)
    ov[i] = fwd(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  if (rg) {
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    tape->record([as, bs, os, a_scalar, b_scalar, len, bwd] {
      const T* g = os->grad.data();
      for (long i = 0; i < len; ++i) {
        const T ai = as->data[a_scalar ? 0 : i];
        const T bi = bs->data[b_scalar ? 0 : i];
        auto [da, db] = bwd(ai, bi, g[i]);
        if (as->requires_grad) as->grad[a_scalar ? 0 : i] += da;
        if (bs->requires_grad) bs->grad[b_scalar ? 0 : i] += db;
      }
    });
  }
  return out;
}

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> unary_op(const Tensor<T>& x, FwdFn fwd, BwdFn bwd) {
  auto* tape = op_tape(x);
  Tensor<T> out = tape->fresh(x.shape(), x.requires_grad());
  auto& ov = out.storage()->data;
  const auto& xv = x.values();
  const long len = x.numel();
  for (long i = 0; i < len; ++i) ov[i] = fwd(xv[i]);
  if (x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record([xs, os, len, bwd] {
      const T* g = os->grad.data();
      for (long i = 0; i < len; ++i) xs->grad[i] += bwd(xs->data[i], os->data[i], g[i]);
    });
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op("add", a, b,
      [](T x, T y) { return x + y; },
      [](T, T, T g) { return std::pair<T, T>(g, g); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op("sub", a, b,
      [](T x, T y) { return x - y; },
      [](T, T, T g) { return std::pair<T, T>(g, -g); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op("mul", a, b,
      [](T x, T y) { return x * y; },
      [](T x, T y, T g) { return std::pair<T, T>(g * y, g * x); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary_op(x,
      [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T, T g) { return v > T(0) ? g : T(0); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return detail::unary_op(x,
      [c](T v) { return c * v; },
      [c](T, T, T g) { return c * g; });
}

template <typename T>
Tensor<T> exp_op(const Tensor<T>& x) {
  return detail::unary_op(x,
      [](T v) { return std::exp(v); },
      [](T, T y, T g) { return g * y; });
}

inline constexpr double kLogEps = 1e-12;

// log with an eps floor; non-positive inputs are a domain error.
template <typename T>
Tensor<T> log_op(const Tensor<T>& x) {
  const auto& xv = x.values();
  for (long i = 0; i < x.numel(); ++i)
    if (xv[i] <= T(0))
      throw NumericError("log: non-positive input " + std::to_string(double(xv[i])) +
                         " at index " + std::to_string(i));
  const T eps = T(kLogEps);
  return detail::unary_op(x,
      [eps](T v) { return std::log(std::max(v, eps)); },
      [eps](T v, T, T g) { return g / std::max(v, eps); });
}

template <typename T>
Tensor<T> sqrt_op(const Tensor<T>& x) {
  const T eps = T(kLogEps);
  return detail::unary_op(x,
      [](T v) { return std::sqrt(v); },
      // guard the derivative at 0 so losses built on norms stay finite
      [eps](T, T y, T g) { return g / (T(2) * std::max(y, eps)); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  auto* tape = detail::op_tape(x);
  Tensor<T> out = tape->fresh({1}, x.requires_grad());
  T s = T(0);
  for (T v : x.values()) s += v;
  out.storage()->data[0] = s;
  if (x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record([xs, os] {
      const T g = os->grad[0];
      for (auto& d : xs->grad) d += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  auto* tape = detail::op_tape(x);
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  Tensor<T> out = tape->fresh({1}, x.requires_grad());
  T s = T(0);
  for (T v : x.values()) s += v;
  const T inv = T(1) / T(x.numel());
  out.storage()->data[0] = s * inv;
  if (x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record([xs, os, inv] {
      const T g = os->grad[0] * inv;
      for (auto& d : xs->grad) d += g;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Row/shape helpers used by the loss compositions

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  auto* tape = detail::op_tape(x);
  if (numel(new_shape) != x.numel())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
  Tensor<T> out = tape->fresh(new_shape, x.requires_grad());
  out.storage()->data = x.values();
  if (x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record([xs, os] {
      for (long i = 0; i < xs->numel(); ++i) xs->grad[i] += os->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> row_sum(const Tensor<T>& x) {
  auto* tape = detail::op_tape(x);
  if (x.ndim() != 2)
    throw DimensionError("row_sum: expected 2-d tensor, got " + shape_str(x.shape()));
  const int n = x.dim(0), m = x.dim(1);
  Tensor<T> out = tape->fresh({n}, x.requires_grad());
  const auto& xv = x.values();
  auto& ov = out.storage()->data;
  for (int i = 0; i < n; ++i) {
    T s = T(0);
    const T* row = xv.data() + static_cast<long>(i) * m;
    for (int j = 0; j < m; ++j) s += row[j];
    ov[i] = s;
  }
  if (x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record([xs, os, n, m] {
      for (int i = 0; i < n; ++i) {
        const T g = os->grad[i];
        T* row = xs->grad.data() + static_cast<long>(i) * m;
        for (int j = 0; j < m; ++j) row[j] += g;
      }
    });
  }
  return out;
}

// Per-row max as a constant (no gradient). Used as the log-sum-exp shift,
// where the shift cancels exactly in both value and gradient.
template <typename T>
Tensor<T> row_max_detached(const Tensor<T>& x) {
  auto* tape = detail::op_tape(x);
  if (x.ndim() != 2)
    throw DimensionError("row_max: expected 2-d tensor, got " + shape_str(x.shape()));
  const int n = x.dim(0), m = x.dim(1);
  std::vector<T> out(n);
  const auto& xv = x.values();
  for (int i = 0; i < n; ++i) {
    const T* row = xv.data() + static_cast<long>(i) * m;
    T mx = row[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    out[i] = mx;
  }
  return tape->constant({n}, std::move(out));
}

// y[i,j] = x[i,j] - v[i]
template <typename T>
Tensor<T> sub_rowbroadcast(const Tensor<T>& x, const Tensor<T>& v) {
  auto* tape = detail::op_tape(x);
  if (x.ndim() != 2 || v.numel() != x.dim(0))
    throw DimensionError("sub_rowbroadcast: shapes " + shape_str(x.shape()) + " and " +
                         shape_str(v.shape()));
  const int n = x.dim(0), m = x.dim(1);
  bool rg = x.requires_grad() || v.requires_grad();
  Tensor<T> out = tape->fresh(x.shape(), rg);
  const auto& xv = x.values();
  const auto& vv = v.values();
  auto& ov = out.storage()->data;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      ov[static_cast<long>(i) * m + j] = xv[static_cast<long>(i) * m + j] - vv[i];
  if (rg) {
    auto xs = x.storage(), vs = v.storage(), os = out.storage();
    tape->record([xs, vs, os, n, m] {
      const T* g = os->grad.data();
      if (xs->requires_grad)
        for (long i = 0; i < static_cast<long>(n) * m; ++i) xs->grad[i] += g[i];
      if (vs->requires_grad)
        for (int i = 0; i < n; ++i) {
          T s = T(0);
          for (int j = 0; j < m; ++j) s += g[static_cast<long>(i) * m + j];
          vs->grad[i] -= s;
        }
    });
  }
  return out;
}

// out[i] = x[i, idx[i]]
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int>& idx) {
  auto* tape = detail::op_tape(x);
  if (x.ndim() != 2 || static_cast<int>(idx.size()) != x.dim(0))
    throw DimensionError("gather_rows: index count " + std::to_string(idx.size()) +
                         " does not match rows of " + shape_str(x.shape()));
  const int n = x.dim(0), m = x.dim(1);
  for (int i = 0; i < n; ++i)
    if (idx[i] < 0 || idx[i] >= m)
      throw DimensionError("gather_rows: index " + std::to_string(idx[i]) +
                           " out of range [0," + std::to_string(m) + ")");
  Tensor<T> out = tape->fresh({n}, x.requires_grad());
  const auto& xv = x.values();
  auto& ov = out.storage()->data;
  for (int i = 0; i < n; ++i) ov[i] = xv[static_cast<long>(i) * m + idx[i]];
  if (x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record([xs, os, idx, m] {
      for (size_t i = 0; i < idx.size(); ++i)
        xs->grad[static_cast<long>(i) * m + idx[i]] += os->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, int begin, int end) {
  auto* tape = detail::op_tape(x);
  if (x.ndim() < 1 || begin < 0 || end > x.dim(0) || begin >= end)
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") invalid for " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[0] = end - begin;
  const long row = numel(out_shape) / (end - begin);
  Tensor<T> out = tape->fresh(out_shape, x.requires_grad());
  const auto& xv = x.values();
  std::copy(xv.begin() + begin * row, xv.begin() + end * row, out.storage()->data.begin());
  if (x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record([xs, os, begin, row] {
      for (long i = 0; i < os->numel(); ++i) xs->grad[begin * row + i] += os->grad[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  auto* tape = detail::op_tape(a, b);
  if (a.ndim() != b.ndim() || a.ndim() < 1)
    throw DimensionError("concat_rows: rank mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  for (int i = 1; i < a.ndim(); ++i)
    if (a.dim(i) != b.dim(i))
      throw DimensionError("concat_rows: trailing dims differ " + shape_str(a.shape()) +
                           " vs " + shape_str(b.shape()));
  Shape out_shape = a.shape();
  out_shape[0] += b.dim(0);
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor<T> out = tape->fresh(out_shape, rg);
  auto& ov = out.storage()->data;
  std::copy(a.values().begin(), a.values().end(), ov.begin());
  std::copy(b.values().begin(), b.values().end(), ov.begin() + a.numel());
  if (rg) {
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    tape->record([as, bs, os] {
      const long na = as->numel();
      if (as->requires_grad)
        for (long i = 0; i < na; ++i) as->grad[i] += os->grad[i];
      if (bs->requires_grad)
        for (long i = 0; i < bs->numel(); ++i) bs->grad[i] += os->grad[na + i];
    });
  }
  return out;
}

// [n x c x h x w] -> [n x c]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  auto* tape = detail::op_tape(x);
  if (x.ndim() != 4)
    throw DimensionError("global_avg_pool: expected 4-d input, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out = tape->fresh({n, c}, x.requires_grad());
  const auto& xv = x.values();
  auto& ov = out.storage()->data;
  const T inv = T(1) / T(hw);
  for (long p = 0; p < static_cast<long>(n) * c; ++p) {
    T s = T(0);
    const T* plane = xv.data() + p * hw;
    for (int j = 0; j < hw; ++j) s += plane[j];
    ov[p] = s * inv;
  }
  if (x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record([xs, os, n, c, hw, inv] {
      for (long p = 0; p < static_cast<long>(n) * c; ++p) {
        const T g = os->grad[p] * inv;
        T* plane = xs->grad.data() + p * hw;
        for (int j = 0; j < hw; ++j) plane[j] += g;
      }
    });
  }
  return out;
}

inline constexpr double kNormEps = 1e-12;

// Row-wise x / max(||x||, eps); rows shorter than eps pass through scaled by
// 1/eps, which keeps the map linear (and differentiable) there.
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps = T(kNormEps)) {
  auto* tape = detail::op_tape(x);
  if (x.ndim() != 2)
    throw DimensionError("l2_normalize_rows: expected 2-d tensor, got " + shape_str(x.shape()));
  const int n = x.dim(0), m = x.dim(1);
  Tensor<T> out = tape->fresh(x.shape(), x.requires_grad());
  const auto& xv = x.values();
  auto& ov = out.storage()->data;
  std::vector<T> norms(n);
  std::vector<char> floored(n);
  for (int i = 0; i < n; ++i) {
    const T* row = xv.data() + static_cast<long>(i) * m;
    T s = T(0);
    for (int j = 0; j < m; ++j) s += row[j] * row[j];
    const T raw = std::sqrt(s);
    floored[i] = raw < eps;
    norms[i] = std::max(raw, eps);
    const T inv = T(1) / norms[i];
    for (int j = 0; j < m; ++j) ov[static_cast<long>(i) * m + j] = row[j] * inv;
  }
  if (x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record([xs, os, norms, floored, n, m] {
      for (int i = 0; i < n; ++i) {
        const T* g = os->grad.data() + static_cast<long>(i) * m;
        const T* y = os->data.data() + static_cast<long>(i) * m;
        T* dx = xs->grad.data() + static_cast<long>(i) * m;
        const T inv = T(1) / norms[i];
        if (floored[i]) {
          for (int j = 0; j < m; ++j) dx[j] += g[j] * inv;
        } else {
          T dot = T(0);
          for (int j = 0; j < m; ++j) dot += g[j] * y[j];
          for (int j = 0; j < m; ++j) dx[j] += (g[j] - y[j] * dot) * inv;
        }
      }
    });
  }
  return out;
}

// Copy that severs the gradient path.
template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  return detail::op_tape(x)->constant(x.shape(), x.values());
}

}  // namespace cds
