#pragma once

// Dense compute kernels behind the autodiff primitives. Every kernel exists
// in two backends: a serial reference (kernels::serial) and an OpenMP one
// (kernels::parallel) that distributes independent output elements across
// threads. Per output element both backends run the identical reduction
// order, so their results are bit-identical and independent of thread count.

#include <cstdint>

namespace cds::kernels {

enum class Backend { Serial, Parallel };

// Process-wide backend. Defaults to Parallel when built with OpenMP,
// overridable via the CDS_KERNELS env var ("serial" | "parallel").
Backend backend();
void set_backend(Backend b);
const char* backend_name();
int thread_count();

struct Conv2dDims {
  int n, c, h, w;    // input
  int o, kh, kw;     // kernel
  int stride, pad;
  int ho, wo;        // output spatial
};

namespace serial {

// c[M x N] (+)= op(a)[M x K] * op(b)[K x N]; ta/tb flag transposed storage.
template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n,
            bool ta, bool tb, bool accumulate);

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, const Conv2dDims& d);

template <typename T>
void conv2d_dinput(const T* g, const T* w, T* dx, const Conv2dDims& d);

template <typename T>
void conv2d_dweight(const T* g, const T* x, T* dw, const Conv2dDims& d);

// Per-channel biased batch statistics over N*H*W elements.
template <typename T>
void bn2d_stats(const T* x, int n, int c, int hw, T* mean, T* var);

// y = gamma * (x - mean) * inv_std + beta, per channel.
template <typename T>
void bn2d_apply(const T* x, const T* gamma, const T* beta, const T* mean,
                const T* inv_std, T* y, int n, int c, int hw);

// Backward reductions: sum_g[c] = sum g, sum_gx[c] = sum g * xhat.
template <typename T>
void bn2d_reduce(const T* g, const T* x, const T* mean, const T* inv_std,
                 T* sum_g, T* sum_gx, int n, int c, int hw);

// Train-mode input gradient:
// dx += gamma*inv_std * (g - sum_g/m - xhat * sum_gx/m).
template <typename T>
void bn2d_dinput(const T* g, const T* x, const T* gamma, const T* mean,
                 const T* inv_std, const T* sum_g, const T* sum_gx,
                 bool batch_stats, T* dx, int n, int c, int hw);

}  // namespace serial

namespace parallel {

template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n,
            bool ta, bool tb, bool accumulate);

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, const Conv2dDims& d);

template <typename T>
void conv2d_dinput(const T* g, const T* w, T* dx, const Conv2dDims& d);

template <typename T>
void conv2d_dweight(const T* g, const T* x, T* dw, const Conv2dDims& d);

template <typename T>
void bn2d_stats(const T* x, int n, int c, int hw, T* mean, T* var);

template <typename T>
void bn2d_apply(const T* x, const T* gamma, const T* beta, const T* mean,
                const T* inv_std, T* y, int n, int c, int hw);

template <typename T>
void bn2d_reduce(const T* g, const T* x, const T* mean, const T* inv_std,
                 T* sum_g, T* sum_gx, int n, int c, int hw);

template <typename T>
void bn2d_dinput(const T* g, const T* x, const T* gamma, const T* mean,
                 const T* inv_std, const T* sum_g, const T* sum_gx,
                 bool batch_stats, T* dx, int n, int c, int hw);

}  // namespace parallel

// Dispatching entry points used by the tensor ops.
template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n,
            bool ta, bool tb, bool accumulate) {
  if (backend() == Backend::Parallel)
    parallel::matmul(a, b, c, m, k, n, ta, tb, accumulate);
  else
    serial::matmul(a, b, c, m, k, n, ta, tb, accumulate);
}

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, const Conv2dDims& d) {
  if (backend() == Backend::Parallel)
    parallel::conv2d_forward(x, w, y, d);
  else
    serial::conv2d_forward(x, w, y, d);
}

template <typename T>
void conv2d_dinput(const T* g, const T* w, T* dx, const Conv2dDims& d) {
  if (backend() == Backend::Parallel)
    parallel::conv2d_dinput(g, w, dx, d);
  else
    serial::conv2d_dinput(g, w, dx, d);
}

template <typename T>
void conv2d_dweight(const T* g, const T* x, T* dw, const Conv2dDims& d) {
  if (backend() == Backend::Parallel)
    parallel::conv2d_dweight(g, x, dw, d);
  else
    serial::conv2d_dweight(g, x, dw, d);
}

template <typename T>
void bn2d_stats(const T* x, int n, int c, int hw, T* mean, T* var) {
  if (backend() == Backend::Parallel)
    parallel::bn2d_stats(x, n, c, hw, mean, var);
  else
    serial::bn2d_stats(x, n, c, hw, mean, var);
}

template <typename T>
void bn2d_apply(const T* x, const T* gamma, const T* beta, const T* mean,
                const T* inv_std, T* y, int n, int c, int hw) {
  if (backend() == Backend::Parallel)
    parallel::bn2d_apply(x, gamma, beta, mean, inv_std, y, n, c, hw);
  else
    serial::bn2d_apply(x, gamma, beta, mean, inv_std, y, n, c, hw);
}

template <typename T>
void bn2d_reduce(const T* g, const T* x, const T* mean, const T* inv_std,
                 T* sum_g, T* sum_gx, int n, int c, int hw) {
  if (backend() == Backend::Parallel)
    parallel::bn2d_reduce(g, x, mean, inv_std, sum_g, sum_gx, n, c, hw);
  else
    serial::bn2d_reduce(g, x, mean, inv_std, sum_g, sum_gx, n, c, hw);
}

template <typename T>
void bn2d_dinput(const T* g, const T* x, const T* gamma, const T* mean,
                 const T* inv_std, const T* sum_g, const T* sum_gx,
                 bool batch_stats, T* dx, int n, int c, int hw) {
  if (backend() == Backend::Parallel)
    parallel::bn2d_dinput(g, x, gamma, mean, inv_std, sum_g, sum_gx,
                          batch_stats, dx, n, c, hw);
  else
    serial::bn2d_dinput(g, x, gamma, mean, inv_std, sum_g, sum_gx,
                        batch_stats, dx, n, c, hw);
}

}  // namespace cds::kernels
