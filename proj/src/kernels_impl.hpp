#pragma once

// Per-element / per-slice workers shared by the serial and parallel kernel
// backends. Each worker owns one independent output slice and performs its
// reduction in a fixed order, which is what makes the two backends
// bit-identical: the parallel backend only changes which thread runs a
// worker, never the arithmetic inside it.

#include <algorithm>
#include <cmath>

#include "cds/kernels.hpp"

namespace cds::kernels::detail {

template <typename T>
inline void matmul_row(const T* a, const T* b, T* c, int i, int m, int k,
                       int n, bool ta, bool tb, bool accumulate) {
  T* crow = c + static_cast<long>(i) * n;
  if (!accumulate) std::fill(crow, crow + n, T(0));
  if (!ta && !tb) {
    const T* arow = a + static_cast<long>(i) * k;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + static_cast<long>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  } else if (!ta && tb) {
    const T* arow = a + static_cast<long>(i) * k;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<long>(j) * k;
      T s = T(0);
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  } else if (ta && !tb) {
    for (int p = 0; p < k; ++p) {
      const T av = a[static_cast<long>(p) * m + i];
      const T* brow = b + static_cast<long>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  } else {
    for (int j = 0; j < n; ++j) {
      T s = T(0);
      for (int p = 0; p < k; ++p)
        s += a[static_cast<long>(p) * m + i] * b[static_cast<long>(j) * k + p];
      crow[j] += s;
    }
  }
}

// Unfold one sample into a [(c*kh*kw) x (ho*wo)] column matrix.
template <typename T>
inline void im2col_sample(const T* x, const Conv2dDims& d, T* cols) {
  const int HW = d.h * d.w;
  const int P = d.ho * d.wo;
  long r = 0;
  for (int c = 0; c < d.c; ++c) {
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj, ++r) {
        T* crow = cols + r * P;
        long idx = 0;
        for (int oh = 0; oh < d.ho; ++oh) {
          const int ih = oh * d.stride - d.pad + ki;
          if (ih < 0 || ih >= d.h) {
            for (int ow = 0; ow < d.wo; ++ow) crow[idx++] = T(0);
            continue;
          }
          const T* xrow = x + static_cast<long>(c) * HW +
                          static_cast<long>(ih) * d.w;
          for (int ow = 0; ow < d.wo; ++ow) {
            const int iw = ow * d.stride - d.pad + kj;
            crow[idx++] = (iw >= 0 && iw < d.w) ? xrow[iw] : T(0);
          }
        }
      }
    }
  }
}

// Fold a column-matrix gradient back onto one sample's input plane.
template <typename T>
inline void col2im_add_sample(const T* cols, const Conv2dDims& d, T* dx) {
  const int HW = d.h * d.w;
  const int P = d.ho * d.wo;
  long r = 0;
  for (int c = 0; c < d.c; ++c) {
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj, ++r) {
        const T* crow = cols + r * P;
        long idx = 0;
        for (int oh = 0; oh < d.ho; ++oh) {
          const int ih = oh * d.stride - d.pad + ki;
          if (ih < 0 || ih >= d.h) {
            idx += d.wo;
            continue;
          }
          T* xrow = dx + static_cast<long>(c) * HW + static_cast<long>(ih) * d.w;
          for (int ow = 0; ow < d.wo; ++ow, ++idx) {
            const int iw = ow * d.stride - d.pad + kj;
            if (iw >= 0 && iw < d.w) xrow[iw] += crow[idx];
          }
        }
      }
    }
  }
}

// y_n = w [o x ckk] * cols_n [ckk x p]
template <typename T>
inline void conv2d_forward_sample(const T* x, const T* w, T* y,
                                  const Conv2dDims& d, T* cols) {
  const int CKK = d.c * d.kh * d.kw;
  const int P = d.ho * d.wo;
  im2col_sample(x, d, cols);
  for (int o = 0; o < d.o; ++o)
    matmul_row(w, cols, y, o, d.o, CKK, P, false, false, false);
}

// dcols_n = w^T [ckk x o] * g_n [o x p], folded back with col2im.
template <typename T>
inline void conv2d_dinput_sample(const T* g, const T* w, T* dx,
                                 const Conv2dDims& d, T* dcols) {
  const int CKK = d.c * d.kh * d.kw;
  const int P = d.ho * d.wo;
  for (int r = 0; r < CKK; ++r)
    matmul_row(w, g, dcols, r, CKK, d.o, P, true, false, false);
  col2im_add_sample(dcols, d, dx);
}

// dw[o, (c,ki,kj)] += sum_n sum_(oh,ow) g[n,o,oh,ow] * x[n,c,ih,iw].
// One worker owns one output channel o, so accumulation order over n and
// spatial positions is fixed.
template <typename T>
inline void conv2d_dweight_channel(const T* g, const T* x, T* dw,
                                   const Conv2dDims& d, int o) {
  const int HW = d.h * d.w;
  const int P = d.ho * d.wo;
  const int CKK = d.c * d.kh * d.kw;
  T* dwrow = dw + static_cast<long>(o) * CKK;
  for (int n = 0; n < d.n; ++n) {
    const T* gplane = g + (static_cast<long>(n) * d.o + o) * P;
    const T* xsample = x + static_cast<long>(n) * d.c * HW;
    for (int oh = 0; oh < d.ho; ++oh) {
      for (int ow = 0; ow < d.wo; ++ow) {
        const T gv = gplane[static_cast<long>(oh) * d.wo + ow];
        if (gv == T(0)) continue;
        long r = 0;
        for (int c = 0; c < d.c; ++c) {
          const T* xplane = xsample + static_cast<long>(c) * HW;
          for (int ki = 0; ki < d.kh; ++ki) {
            const int ih = oh * d.stride - d.pad + ki;
            if (ih < 0 || ih >= d.h) {
              r += d.kw;
              continue;
            }
            const T* xrow = xplane + static_cast<long>(ih) * d.w;
            const int iw0 = ow * d.stride - d.pad;
            for (int kj = 0; kj < d.kw; ++kj, ++r) {
              const int iw = iw0 + kj;
              if (iw >= 0 && iw < d.w) dwrow[r] += gv * xrow[iw];
            }
          }
        }
      }
    }
  }
}

template <typename T>
inline void bn2d_stats_channel(const T* x, int n, int c_total, int hw, int c,
                               T* mean, T* var) {
  const long m = static_cast<long>(n) * hw;
  T sum = T(0);
  for (int i = 0; i < n; ++i) {
    const T* plane = x + (static_cast<long>(i) * c_total + c) * hw;
    for (int j = 0; j < hw; ++j) sum += plane[j];
  }
  const T mu = sum / T(m);
  T sq = T(0);
  for (int i = 0; i < n; ++i) {
    const T* plane = x + (static_cast<long>(i) * c_total + c) * hw;
    for (int j = 0; j < hw; ++j) {
      const T dv = plane[j] - mu;
      sq += dv * dv;
    }
  }
  mean[c] = mu;
  var[c] = sq / T(m);
}

template <typename T>
inline void bn2d_apply_plane(const T* x, const T* gamma, const T* beta,
                             const T* mean, const T* inv_std, T* y,
                             int c_total, int hw, long plane) {
  const int c = static_cast<int>(plane % c_total);
  const T a = gamma[c] * inv_std[c];
  const T b = beta[c] - mean[c] * a;
  const T* xp = x + plane * hw;
  T* yp = y + plane * hw;
  for (int j = 0; j < hw; ++j) yp[j] = a * xp[j] + b;
}

template <typename T>
inline void bn2d_reduce_channel(const T* g, const T* x, const T* mean,
                                const T* inv_std, T* sum_g, T* sum_gx, int n,
                                int c_total, int hw, int c) {
  T sg = T(0), sgx = T(0);
  for (int i = 0; i < n; ++i) {
    const long off = (static_cast<long>(i) * c_total + c) * hw;
    const T* gp = g + off;
    const T* xp = x + off;
    for (int j = 0; j < hw; ++j) {
      sg += gp[j];
      sgx += gp[j] * (xp[j] - mean[c]) * inv_std[c];
    }
  }
  sum_g[c] = sg;
  sum_gx[c] = sgx;
}

template <typename T>
inline void bn2d_dinput_plane(const T* g, const T* x, const T* gamma,
                              const T* mean, const T* inv_std, const T* sum_g,
                              const T* sum_gx, bool batch_stats, T* dx, int n,
                              int c_total, int hw, long plane) {
  const int c = static_cast<int>(plane % c_total);
  const T a = gamma[c] * inv_std[c];
  const T* gp = g + plane * hw;
  T* dp = dx + plane * hw;
  if (!batch_stats) {
    for (int j = 0; j < hw; ++j) dp[j] += a * gp[j];
    return;
  }
  const T m = T(static_cast<long>(n) * hw);
  const T mg = sum_g[c] / m;
  const T mgx = sum_gx[c] / m;
  const T* xp = x + plane * hw;
  for (int j = 0; j < hw; ++j) {
    const T xhat = (xp[j] - mean[c]) * inv_std[c];
    dp[j] += a * (gp[j] - mg - xhat * mgx);
  }
}

}  // namespace cds::kernels::detail
