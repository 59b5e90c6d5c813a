// OpenMP backend. Work is split across threads at the granularity of the
// per-slice workers in kernels_impl.hpp (matrix rows, samples, channels,
// planes); within a slice the reduction order matches the serial backend,
// so outputs are bit-identical for any thread count. Small problems skip
// the parallel region to avoid fork overhead.

#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kernels_impl.hpp"

namespace cds::kernels::parallel {

namespace {
constexpr long kParallelCutoff = 1 << 15;  // flops below this stay serial
}

template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n, bool ta,
            bool tb, bool accumulate) {
  const long work = static_cast<long>(m) * k * n;
  if (work < kParallelCutoff || m == 1) {
    for (int i = 0; i < m; ++i)
      detail::matmul_row(a, b, c, i, m, k, n, ta, tb, accumulate);
    return;
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    detail::matmul_row(a, b, c, i, m, k, n, ta, tb, accumulate);
}

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, const Conv2dDims& d) {
  const long xs = static_cast<long>(d.c) * d.h * d.w;
  const long ys = static_cast<long>(d.o) * d.ho * d.wo;
  const long cols_len = static_cast<long>(d.c) * d.kh * d.kw * d.ho * d.wo;
#pragma omp parallel
  {
    std::vector<T> cols(cols_len);
#pragma omp for schedule(static)
    for (int i = 0; i < d.n; ++i)
      detail::conv2d_forward_sample(x + i * xs, w, y + i * ys, d, cols.data());
  }
}

template <typename T>
void conv2d_dinput(const T* g, const T* w, T* dx, const Conv2dDims& d) {
  const long xs = static_cast<long>(d.c) * d.h * d.w;
  const long ys = static_cast<long>(d.o) * d.ho * d.wo;
  const long cols_len = static_cast<long>(d.c) * d.kh * d.kw * d.ho * d.wo;
#pragma omp parallel
  {
    std::vector<T> dcols(cols_len);
#pragma omp for schedule(static)
    for (int i = 0; i < d.n; ++i)
      detail::conv2d_dinput_sample(g + i * ys, w, dx + i * xs, d, dcols.data());
  }
}

template <typename T>
void conv2d_dweight(const T* g, const T* x, T* dw, const Conv2dDims& d) {
#pragma omp parallel for schedule(static)
  for (int o = 0; o < d.o; ++o)
    detail::conv2d_dweight_channel(g, x, dw, d, o);
}

template <typename T>
void bn2d_stats(const T* x, int n, int c, int hw, T* mean, T* var) {
#pragma omp parallel for schedule(static)
  for (int j = 0; j < c; ++j)
    detail::bn2d_stats_channel(x, n, c, hw, j, mean, var);
}

template <typename T>
void bn2d_apply(const T* x, const T* gamma, const T* beta, const T* mean,
                const T* inv_std, T* y, int n, int c, int hw) {
  const long planes = static_cast<long>(n) * c;
#pragma omp parallel for schedule(static)
  for (long p = 0; p < planes; ++p)
    detail::bn2d_apply_plane(x, gamma, beta, mean, inv_std, y, c, hw, p);
}

template <typename T>
void bn2d_reduce(const T* g, const T* x, const T* mean, const T* inv_std,
                 T* sum_g, T* sum_gx, int n, int c, int hw) {
#pragma omp parallel for schedule(static)
  for (int j = 0; j < c; ++j)
    detail::bn2d_reduce_channel(g, x, mean, inv_std, sum_g, sum_gx, n, c, hw, j);
}

template <typename T>
void bn2d_dinput(const T* g, const T* x, const T* gamma, const T* mean,
                 const T* inv_std, const T* sum_g, const T* sum_gx,
                 bool batch_stats, T* dx, int n, int c, int hw) {
  const long planes = static_cast<long>(n) * c;
#pragma omp parallel for schedule(static)
  for (long p = 0; p < planes; ++p)
    detail::bn2d_dinput_plane(g, x, gamma, mean, inv_std, sum_g, sum_gx,
                              batch_stats, dx, n, c, hw, p);
}

template void matmul<float>(const float*, const float*, float*, int, int, int, bool, bool, bool);
template void matmul<double>(const double*, const double*, double*, int, int, int, bool, bool, bool);
template void conv2d_forward<float>(const float*, const float*, float*, const Conv2dDims&);
template void conv2d_forward<double>(const double*, const double*, double*, const Conv2dDims&);
template void conv2d_dinput<float>(const float*, const float*, float*, const Conv2dDims&);
template void conv2d_dinput<double>(const double*, const double*, double*, const Conv2dDims&);
template void conv2d_dweight<float>(const float*, const float*, float*, const Conv2dDims&);
template void conv2d_dweight<double>(const double*, const double*, double*, const Conv2dDims&);
template void bn2d_stats<float>(const float*, int, int, int, float*, float*);
template void bn2d_stats<double>(const double*, int, int, int, double*, double*);
template void bn2d_apply<float>(const float*, const float*, const float*, const float*, const float*, float*, int, int, int);
template void bn2d_apply<double>(const double*, const double*, const double*, const double*, const double*, double*, int, int, int);
template void bn2d_reduce<float>(const float*, const float*, const float*, const float*, float*, float*, int, int, int);
template void bn2d_reduce<double>(const double*, const double*, const double*, const double*, double*, double*, int, int, int);
template void bn2d_dinput<float>(const float*, const float*, const float*, const float*, const float*, const float*, const float*, bool, float*, int, int, int);
template void bn2d_dinput<double>(const double*, const double*, const double*, const double*, const double*, const double*, const double*, bool, double*, int, int, int);

}  // namespace cds::kernels::parallel
