// AVX2+FMA kernels, 4 doubles per vector. Fallback path for CPUs without
// AVX-512F; tails run scalar.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "nnf/kernels.hpp"

namespace nnf::kern {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

template <bool ACC>
void gemm_nn_impl(double* c, const double* a, const double* b, int m, int k,
                  int n, int a_row_stride, int a_col_stride) {
  auto a_at = [&](int i, int p) -> double {
    return a[size_t(i) * a_row_stride + size_t(p) * a_col_stride];
  };
  int j = 0;
  for (; j + 8 <= n; j += 8) {
    int i = 0;
    for (; i + 4 <= m; i += 4) {
      __m256d c00, c01, c10, c11, c20, c21, c30, c31;
      if (ACC) {
        c00 = _mm256_loadu_pd(c + size_t(i + 0) * n + j);
        c01 = _mm256_loadu_pd(c + size_t(i + 0) * n + j + 4);
        c10 = _mm256_loadu_pd(c + size_t(i + 1) * n + j);
        c11 = _mm256_loadu_pd(c + size_t(i + 1) * n + j + 4);
        c20 = _mm256_loadu_pd(c + size_t(i + 2) * n + j);
        c21 = _mm256_loadu_pd(c + size_t(i + 2) * n + j + 4);
        c30 = _mm256_loadu_pd(c + size_t(i + 3) * n + j);
        c31 = _mm256_loadu_pd(c + size_t(i + 3) * n + j + 4);
      } else {
        c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_pd();
      }
      for (int p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + size_t(p) * n + j);
        const __m256d b1 = _mm256_loadu_pd(b + size_t(p) * n + j + 4);
        const __m256d a0 = _mm256_set1_pd(a_at(i + 0, p));
        const __m256d a1 = _mm256_set1_pd(a_at(i + 1, p));
        const __m256d a2 = _mm256_set1_pd(a_at(i + 2, p));
        const __m256d a3 = _mm256_set1_pd(a_at(i + 3, p));
        c00 = _mm256_fmadd_pd(a0, b0, c00);
        c01 = _mm256_fmadd_pd(a0, b1, c01);
        c10 = _mm256_fmadd_pd(a1, b0, c10);
        c11 = _mm256_fmadd_pd(a1, b1, c11);
        c20 = _mm256_fmadd_pd(a2, b0, c20);
        c21 = _mm256_fmadd_pd(a2, b1, c21);
        c30 = _mm256_fmadd_pd(a3, b0, c30);
        c31 = _mm256_fmadd_pd(a3, b1, c31);
      }
      _mm256_storeu_pd(c + size_t(i + 0) * n + j, c00);
      _mm256_storeu_pd(c + size_t(i + 0) * n + j + 4, c01);
      _mm256_storeu_pd(c + size_t(i + 1) * n + j, c10);
      _mm256_storeu_pd(c + size_t(i + 1) * n + j + 4, c11);
      _mm256_storeu_pd(c + size_t(i + 2) * n + j, c20);
      _mm256_storeu_pd(c + size_t(i + 2) * n + j + 4, c21);
      _mm256_storeu_pd(c + size_t(i + 3) * n + j, c30);
      _mm256_storeu_pd(c + size_t(i + 3) * n + j + 4, c31);
    }
    for (; i < m; ++i) {
      __m256d c0, c1;
      if (ACC) {
        c0 = _mm256_loadu_pd(c + size_t(i) * n + j);
        c1 = _mm256_loadu_pd(c + size_t(i) * n + j + 4);
      } else {
        c0 = c1 = _mm256_setzero_pd();
      }
      for (int p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(a_at(i, p));
        c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + size_t(p) * n + j), c0);
        c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + size_t(p) * n + j + 4), c1);
      }
      _mm256_storeu_pd(c + size_t(i) * n + j, c0);
      _mm256_storeu_pd(c + size_t(i) * n + j + 4, c1);
    }
  }
  for (; j < n; ++j) {
    for (int i = 0; i < m; ++i) {
      double s = ACC ? c[size_t(i) * n + j] : 0.0;
      for (int p = 0; p < k; ++p) s += a_at(i, p) * b[size_t(p) * n + j];
      c[size_t(i) * n + j] = s;
    }
  }
}

void gemm_nn_avx2(double* c, const double* a, const double* b, int m, int k,
                  int n, bool accumulate) {
  if (accumulate)
    gemm_nn_impl<true>(c, a, b, m, k, n, k, 1);
  else
    gemm_nn_impl<false>(c, a, b, m, k, n, k, 1);
}

void gemm_tn_avx2(double* c, const double* a, const double* b, int m, int k,
                  int n, bool accumulate) {
  if (accumulate)
    gemm_nn_impl<true>(c, a, b, m, k, n, 1, m);
  else
    gemm_nn_impl<false>(c, a, b, m, k, n, 1, m);
}

template <bool ACC>
void gemm_nt_impl(double* c, const double* a, const double* b, int m, int k,
                  int n) {
  const int kv = k & ~3;
  for (int i = 0; i < m; ++i) {
    const double* arow = a + size_t(i) * k;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256d acc[4];
      for (auto& v : acc) v = _mm256_setzero_pd();
      for (int p = 0; p < kv; p += 4) {
        const __m256d va = _mm256_loadu_pd(arow + p);
        for (int t = 0; t < 4; ++t)
          acc[t] = _mm256_fmadd_pd(
              va, _mm256_loadu_pd(b + size_t(j + t) * k + p), acc[t]);
      }
      for (int t = 0; t < 4; ++t) {
        double s = hsum(acc[t]);
        for (int p = kv; p < k; ++p) s += arow[p] * b[size_t(j + t) * k + p];
        double* dst = c + size_t(i) * n + j + t;
        *dst = ACC ? *dst + s : s;
      }
    }
    for (; j < n; ++j) {
      const double* brow = b + size_t(j) * k;
      __m256d acc = _mm256_setzero_pd();
      for (int p = 0; p < kv; p += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p),
                              _mm256_loadu_pd(brow + p), acc);
      double s = hsum(acc);
      for (int p = kv; p < k; ++p) s += arow[p] * brow[p];
      double* dst = c + size_t(i) * n + j;
      *dst = ACC ? *dst + s : s;
    }
  }
}

void gemm_nt_avx2(double* c, const double* a, const double* b, int m, int k,
                  int n, bool accumulate) {
  if (accumulate)
    gemm_nt_impl<true>(c, a, b, m, k, n);
  else
    gemm_nt_impl<false>(c, a, b, m, k, n);
}

void add_avx2(double* y, const double* a, const double* b, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                          _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void hadamard_avx2(double* y, const double* a, const double* b, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                          _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void hadamard_acc_avx2(double* y, const double* a, const double* b, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                               _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a[i] * b[i];
}

void axpy_avx2(double* y, double alpha, const double* x, size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(double* y, const double* x, double alpha, size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void relu_avx2(double* y, const double* x, size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_avx2(double* dx, const double* out, const double* dy, size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(out + i), zero, _CMP_GT_OQ);
    const __m256d gated = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), gated));
  }
  for (; i < n; ++i)
    if (out[i] > 0.0) dx[i] += dy[i];
}

double dot_avx2(const double* a, const double* b, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_avx2(const double* x, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

// The fat kernels below are plain loops; with -mavx2 -mfma the compiler
// vectorizes them well enough for the fallback path.
void ln_fwd_avx2(double* y, double* stats, const double* x,
                 const double* gamma, const double* beta, int rows, int cols,
                 double eps) {
  for (int i = 0; i < rows; ++i) {
    const double* xr = x + size_t(i) * cols;
    double* yr = y + size_t(i) * cols;
    double mu = 0.0;
    for (int j = 0; j < cols; ++j) mu += xr[j];
    mu /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = xr[j] - mu;
      var += d * d;
    }
    var /= cols;
    const double rstd = 1.0 / std::sqrt(var + eps);
    stats[2 * i] = mu;
    stats[2 * i + 1] = rstd;
    for (int j = 0; j < cols; ++j)
      yr[j] = gamma[j] * ((xr[j] - mu) * rstd) + beta[j];
  }
}

void ln_bwd_avx2(double* dx, int dx_mode, double* dgamma, double* dbeta,
                 const double* x, const double* gamma, const double* dy,
                 const double* stats, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const double mu = stats[2 * i];
    const double rstd = stats[2 * i + 1];
    const double* xr = x + size_t(i) * cols;
    const double* dyr = dy + size_t(i) * cols;
    double mean_dyh = 0.0, mean_dyh_xhat = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double xhat = (xr[j] - mu) * rstd;
      const double dyh = dyr[j] * gamma[j];
      mean_dyh += dyh;
      mean_dyh_xhat += dyh * xhat;
      if (dgamma) dgamma[j] += dyr[j] * xhat;
      if (dbeta) dbeta[j] += dyr[j];
    }
    mean_dyh /= cols;
    mean_dyh_xhat /= cols;
    if (dx_mode == 0) continue;
    double* dxr = dx + size_t(i) * cols;
    for (int j = 0; j < cols; ++j) {
      const double xhat = (xr[j] - mu) * rstd;
      const double v =
          rstd * (dyr[j] * gamma[j] - mean_dyh - xhat * mean_dyh_xhat);
      dxr[j] = dx_mode == 2 ? dxr[j] + v : v;
    }
  }
}

void adamw_avx2(double* theta, double* m, double* v, const double* g, size_t n,
                double beta1, double beta2, double inv_bc1, double inv_bc2,
                double lr, double wd, double eps) {
  for (size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] * inv_bc1;
    const double vhat = v[i] * inv_bc2;
    theta[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * theta[i]);
  }
}

void ema_avx2(double* e, const double* p, double decay, size_t n) {
  for (size_t i = 0; i < n; ++i) e[i] = decay * e[i] + (1.0 - decay) * p[i];
}

}  // namespace

extern const Ops kAvx2Ops;
const Ops kAvx2Ops = {
    gemm_nn_avx2, gemm_tn_avx2,     gemm_nt_avx2, add_avx2,
    hadamard_avx2, hadamard_acc_avx2, axpy_avx2,   scale_avx2,
    relu_avx2,    relu_bwd_avx2,    dot_avx2,     sum_avx2,
    ln_fwd_avx2,  ln_bwd_avx2,      adamw_avx2,   ema_avx2,
    "avx2",
};

}  // namespace nnf::kern

#endif  // x86_64
