// AVX-512F kernels, 8 doubles per vector. Compiled with -mavx512f in its
// own translation unit; only dispatch.cpp decides whether to use it.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "nnf/kernels.hpp"

namespace nnf::kern {
namespace {

inline __mmask8 tail_mask(int rem) { return __mmask8((1u << rem) - 1u); }

// 4 rows x 16 columns register block; broadcast A, stream B.
template <bool ACC>
void gemm_nn_impl(double* c, const double* a, const double* b, int m, int k,
                  int n, int a_row_stride, int a_col_stride) {
  auto a_at = [&](int i, int p) -> double {
    return a[size_t(i) * a_row_stride + size_t(p) * a_col_stride];
  };
  int j = 0;
  for (; j + 16 <= n; j += 16) {
    int i = 0;
    for (; i + 4 <= m; i += 4) {
      __m512d c00, c01, c10, c11, c20, c21, c30, c31;
      if (ACC) {
        c00 = _mm512_loadu_pd(c + size_t(i + 0) * n + j);
        c01 = _mm512_loadu_pd(c + size_t(i + 0) * n + j + 8);
        c10 = _mm512_loadu_pd(c + size_t(i + 1) * n + j);
        c11 = _mm512_loadu_pd(c + size_t(i + 1) * n + j + 8);
        c20 = _mm512_loadu_pd(c + size_t(i + 2) * n + j);
        c21 = _mm512_loadu_pd(c + size_t(i + 2) * n + j + 8);
        c30 = _mm512_loadu_pd(c + size_t(i + 3) * n + j);
        c31 = _mm512_loadu_pd(c + size_t(i + 3) * n + j + 8);
      } else {
        c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm512_setzero_pd();
      }
      for (int p = 0; p < k; ++p) {
        const __m512d b0 = _mm512_loadu_pd(b + size_t(p) * n + j);
        const __m512d b1 = _mm512_loadu_pd(b + size_t(p) * n + j + 8);
        const __m512d a0 = _mm512_set1_pd(a_at(i + 0, p));
        const __m512d a1 = _mm512_set1_pd(a_at(i + 1, p));
        const __m512d a2 = _mm512_set1_pd(a_at(i + 2, p));
        const __m512d a3 = _mm512_set1_pd(a_at(i + 3, p));
        c00 = _mm512_fmadd_pd(a0, b0, c00);
        c01 = _mm512_fmadd_pd(a0, b1, c01);
        c10 = _mm512_fmadd_pd(a1, b0, c10);
        c11 = _mm512_fmadd_pd(a1, b1, c11);
        c20 = _mm512_fmadd_pd(a2, b0, c20);
        c21 = _mm512_fmadd_pd(a2, b1, c21);
        c30 = _mm512_fmadd_pd(a3, b0, c30);
        c31 = _mm512_fmadd_pd(a3, b1, c31);
      }
      _mm512_storeu_pd(c + size_t(i + 0) * n + j, c00);
      _mm512_storeu_pd(c + size_t(i + 0) * n + j + 8, c01);
      _mm512_storeu_pd(c + size_t(i + 1) * n + j, c10);
      _mm512_storeu_pd(c + size_t(i + 1) * n + j + 8, c11);
      _mm512_storeu_pd(c + size_t(i + 2) * n + j, c20);
      _mm512_storeu_pd(c + size_t(i + 2) * n + j + 8, c21);
      _mm512_storeu_pd(c + size_t(i + 3) * n + j, c30);
      _mm512_storeu_pd(c + size_t(i + 3) * n + j + 8, c31);
    }
    if (i + 2 <= m) {  // 2-row tail
      __m512d c00, c01, c10, c11;
      if (ACC) {
        c00 = _mm512_loadu_pd(c + size_t(i + 0) * n + j);
        c01 = _mm512_loadu_pd(c + size_t(i + 0) * n + j + 8);
        c10 = _mm512_loadu_pd(c + size_t(i + 1) * n + j);
        c11 = _mm512_loadu_pd(c + size_t(i + 1) * n + j + 8);
      } else {
        c00 = c01 = c10 = c11 = _mm512_setzero_pd();
      }
      for (int p = 0; p < k; ++p) {
        const __m512d b0 = _mm512_loadu_pd(b + size_t(p) * n + j);
        const __m512d b1 = _mm512_loadu_pd(b + size_t(p) * n + j + 8);
        const __m512d a0 = _mm512_set1_pd(a_at(i + 0, p));
        const __m512d a1 = _mm512_set1_pd(a_at(i + 1, p));
        c00 = _mm512_fmadd_pd(a0, b0, c00);
        c01 = _mm512_fmadd_pd(a0, b1, c01);
        c10 = _mm512_fmadd_pd(a1, b0, c10);
        c11 = _mm512_fmadd_pd(a1, b1, c11);
      }
      _mm512_storeu_pd(c + size_t(i + 0) * n + j, c00);
      _mm512_storeu_pd(c + size_t(i + 0) * n + j + 8, c01);
      _mm512_storeu_pd(c + size_t(i + 1) * n + j, c10);
      _mm512_storeu_pd(c + size_t(i + 1) * n + j + 8, c11);
      i += 2;
    }
    if (i < m) {  // last row
      __m512d c0, c1;
      if (ACC) {
        c0 = _mm512_loadu_pd(c + size_t(i) * n + j);
        c1 = _mm512_loadu_pd(c + size_t(i) * n + j + 8);
      } else {
        c0 = c1 = _mm512_setzero_pd();
      }
      for (int p = 0; p < k; ++p) {
        const __m512d av = _mm512_set1_pd(a_at(i, p));
        c0 = _mm512_fmadd_pd(av, _mm512_loadu_pd(b + size_t(p) * n + j), c0);
        c1 = _mm512_fmadd_pd(av, _mm512_loadu_pd(b + size_t(p) * n + j + 8), c1);
      }
      _mm512_storeu_pd(c + size_t(i) * n + j, c0);
      _mm512_storeu_pd(c + size_t(i) * n + j + 8, c1);
    }
  }
  // 8-wide blocks, the last one masked.
  for (; j < n; j += 8) {
    const int rem = n - j < 8 ? n - j : 8;
    const __mmask8 msk = tail_mask(rem);
    int i = 0;
    for (; i + 2 <= m; i += 2) {
      __m512d c0, c1;
      if (ACC) {
        c0 = _mm512_maskz_loadu_pd(msk, c + size_t(i + 0) * n + j);
        c1 = _mm512_maskz_loadu_pd(msk, c + size_t(i + 1) * n + j);
      } else {
        c0 = c1 = _mm512_setzero_pd();
      }
      for (int p = 0; p < k; ++p) {
        const __m512d bv = _mm512_maskz_loadu_pd(msk, b + size_t(p) * n + j);
        c0 = _mm512_fmadd_pd(_mm512_set1_pd(a_at(i + 0, p)), bv, c0);
        c1 = _mm512_fmadd_pd(_mm512_set1_pd(a_at(i + 1, p)), bv, c1);
      }
      _mm512_mask_storeu_pd(c + size_t(i + 0) * n + j, msk, c0);
      _mm512_mask_storeu_pd(c + size_t(i + 1) * n + j, msk, c1);
    }
    if (i < m) {
      __m512d c0 = ACC ? _mm512_maskz_loadu_pd(msk, c + size_t(i) * n + j)
                       : _mm512_setzero_pd();
      for (int p = 0; p < k; ++p) {
        const __m512d bv = _mm512_maskz_loadu_pd(msk, b + size_t(p) * n + j);
        c0 = _mm512_fmadd_pd(_mm512_set1_pd(a_at(i, p)), bv, c0);
      }
      _mm512_mask_storeu_pd(c + size_t(i) * n + j, msk, c0);
    }
  }
}

void gemm_nn_avx512(double* c, const double* a, const double* b, int m, int k,
                    int n, bool accumulate) {
  if (accumulate)
    gemm_nn_impl<true>(c, a, b, m, k, n, k, 1);
  else
    gemm_nn_impl<false>(c, a, b, m, k, n, k, 1);
}

// A^T path reuses the broadcast kernel with swapped strides: a[k,i] sits at
// a + p*m + i.
void gemm_tn_avx512(double* c, const double* a, const double* b, int m, int k,
                    int n, bool accumulate) {
  if (accumulate)
    gemm_nn_impl<true>(c, a, b, m, k, n, 1, m);
  else
    gemm_nn_impl<false>(c, a, b, m, k, n, 1, m);
}

// Dot-product form: both A rows and B rows are contiguous in k.
// 2 rows x 8 columns of C per iteration, 16 lane-accumulators.
template <bool ACC>
void gemm_nt_impl(double* c, const double* a, const double* b, int m, int k,
                  int n) {
  const int kv = k & ~7;
  const __mmask8 kmsk = tail_mask(k - kv);
  int i = 0;
  for (; i + 2 <= m; i += 2) {
    const double* a0 = a + size_t(i) * k;
    const double* a1 = a + size_t(i + 1) * k;
    int j = 0;
    for (; j + 8 <= n; j += 8) {
      __m512d acc0[8], acc1[8];
      for (int t = 0; t < 8; ++t) acc0[t] = acc1[t] = _mm512_setzero_pd();
      for (int p = 0; p < kv; p += 8) {
        const __m512d va0 = _mm512_loadu_pd(a0 + p);
        const __m512d va1 = _mm512_loadu_pd(a1 + p);
        for (int t = 0; t < 8; ++t) {
          const __m512d vb = _mm512_loadu_pd(b + size_t(j + t) * k + p);
          acc0[t] = _mm512_fmadd_pd(va0, vb, acc0[t]);
          acc1[t] = _mm512_fmadd_pd(va1, vb, acc1[t]);
        }
      }
      if (kv < k) {
        const __m512d va0 = _mm512_maskz_loadu_pd(kmsk, a0 + kv);
        const __m512d va1 = _mm512_maskz_loadu_pd(kmsk, a1 + kv);
        for (int t = 0; t < 8; ++t) {
          const __m512d vb =
              _mm512_maskz_loadu_pd(kmsk, b + size_t(j + t) * k + kv);
          acc0[t] = _mm512_fmadd_pd(va0, vb, acc0[t]);
          acc1[t] = _mm512_fmadd_pd(va1, vb, acc1[t]);
        }
      }
      double* c0 = c + size_t(i) * n + j;
      double* c1 = c + size_t(i + 1) * n + j;
      for (int t = 0; t < 8; ++t) {
        const double s0 = _mm512_reduce_add_pd(acc0[t]);
        const double s1 = _mm512_reduce_add_pd(acc1[t]);
        c0[t] = ACC ? c0[t] + s0 : s0;
        c1[t] = ACC ? c1[t] + s1 : s1;
      }
    }
    for (; j < n; ++j) {
      const double* brow = b + size_t(j) * k;
      __m512d acc0 = _mm512_setzero_pd(), acc1 = _mm512_setzero_pd();
      for (int p = 0; p < kv; p += 8) {
        const __m512d vb = _mm512_loadu_pd(brow + p);
        acc0 = _mm512_fmadd_pd(_mm512_loadu_pd(a0 + p), vb, acc0);
        acc1 = _mm512_fmadd_pd(_mm512_loadu_pd(a1 + p), vb, acc1);
      }
      if (kv < k) {
        const __m512d vb = _mm512_maskz_loadu_pd(kmsk, brow + kv);
        acc0 = _mm512_fmadd_pd(_mm512_maskz_loadu_pd(kmsk, a0 + kv), vb, acc0);
        acc1 = _mm512_fmadd_pd(_mm512_maskz_loadu_pd(kmsk, a1 + kv), vb, acc1);
      }
      const double s0 = _mm512_reduce_add_pd(acc0);
      const double s1 = _mm512_reduce_add_pd(acc1);
      c[size_t(i) * n + j] = ACC ? c[size_t(i) * n + j] + s0 : s0;
      c[size_t(i + 1) * n + j] = ACC ? c[size_t(i + 1) * n + j] + s1 : s1;
    }
  }
  if (i < m) {
    const double* a0 = a + size_t(i) * k;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + size_t(j) * k;
      __m512d acc = _mm512_setzero_pd();
      for (int p = 0; p < kv; p += 8)
        acc = _mm512_fmadd_pd(_mm512_loadu_pd(a0 + p),
                              _mm512_loadu_pd(brow + p), acc);
      if (kv < k)
        acc = _mm512_fmadd_pd(_mm512_maskz_loadu_pd(kmsk, a0 + kv),
                              _mm512_maskz_loadu_pd(kmsk, brow + kv), acc);
      const double s = _mm512_reduce_add_pd(acc);
      c[size_t(i) * n + j] = ACC ? c[size_t(i) * n + j] + s : s;
    }
  }
}

void gemm_nt_avx512(double* c, const double* a, const double* b, int m, int k,
                    int n, bool accumulate) {
  if (accumulate)
    gemm_nt_impl<true>(c, a, b, m, k, n);
  else
    gemm_nt_impl<false>(c, a, b, m, k, n);
}

void add_avx512(double* y, const double* a, const double* b, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(y + i, _mm512_add_pd(_mm512_loadu_pd(a + i),
                                          _mm512_loadu_pd(b + i)));
  if (i < n) {
    const __mmask8 msk = tail_mask(int(n - i));
    _mm512_mask_storeu_pd(y + i, msk,
                          _mm512_add_pd(_mm512_maskz_loadu_pd(msk, a + i),
                                        _mm512_maskz_loadu_pd(msk, b + i)));
  }
}

void hadamard_avx512(double* y, const double* a, const double* b, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(y + i, _mm512_mul_pd(_mm512_loadu_pd(a + i),
                                          _mm512_loadu_pd(b + i)));
  if (i < n) {
    const __mmask8 msk = tail_mask(int(n - i));
    _mm512_mask_storeu_pd(y + i, msk,
                          _mm512_mul_pd(_mm512_maskz_loadu_pd(msk, a + i),
                                        _mm512_maskz_loadu_pd(msk, b + i)));
  }
}

void hadamard_acc_avx512(double* y, const double* a, const double* b,
                         size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(
        y + i, _mm512_fmadd_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i),
                               _mm512_loadu_pd(y + i)));
  if (i < n) {
    const __mmask8 msk = tail_mask(int(n - i));
    _mm512_mask_storeu_pd(
        y + i, msk,
        _mm512_fmadd_pd(_mm512_maskz_loadu_pd(msk, a + i),
                        _mm512_maskz_loadu_pd(msk, b + i),
                        _mm512_maskz_loadu_pd(msk, y + i)));
  }
}

void axpy_avx512(double* y, double alpha, const double* x, size_t n) {
  const __m512d va = _mm512_set1_pd(alpha);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(
        y + i, _mm512_fmadd_pd(va, _mm512_loadu_pd(x + i), _mm512_loadu_pd(y + i)));
  if (i < n) {
    const __mmask8 msk = tail_mask(int(n - i));
    _mm512_mask_storeu_pd(y + i, msk,
                          _mm512_fmadd_pd(va, _mm512_maskz_loadu_pd(msk, x + i),
                                          _mm512_maskz_loadu_pd(msk, y + i)));
  }
}

void scale_avx512(double* y, const double* x, double alpha, size_t n) {
  const __m512d va = _mm512_set1_pd(alpha);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(y + i, _mm512_mul_pd(va, _mm512_loadu_pd(x + i)));
  if (i < n) {
    const __mmask8 msk = tail_mask(int(n - i));
    _mm512_mask_storeu_pd(
        y + i, msk, _mm512_mul_pd(va, _mm512_maskz_loadu_pd(msk, x + i)));
  }
}

void relu_avx512(double* y, const double* x, size_t n) {
  const __m512d zero = _mm512_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(y + i, _mm512_max_pd(zero, _mm512_loadu_pd(x + i)));
  if (i < n) {
    const __mmask8 msk = tail_mask(int(n - i));
    _mm512_mask_storeu_pd(
        y + i, msk, _mm512_max_pd(zero, _mm512_maskz_loadu_pd(msk, x + i)));
  }
}

void relu_bwd_avx512(double* dx, const double* out, const double* dy,
                     size_t n) {
  const __m512d zero = _mm512_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __mmask8 pos =
        _mm512_cmp_pd_mask(_mm512_loadu_pd(out + i), zero, _CMP_GT_OQ);
    const __m512d sum = _mm512_add_pd(_mm512_loadu_pd(dx + i),
                                      _mm512_maskz_loadu_pd(pos, dy + i));
    _mm512_storeu_pd(dx + i, sum);
  }
  for (; i < n; ++i)
    if (out[i] > 0.0) dx[i] += dy[i];
}

double dot_avx512(const double* a, const double* b, size_t n) {
  __m512d acc = _mm512_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm512_fmadd_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i), acc);
  if (i < n) {
    const __mmask8 msk = tail_mask(int(n - i));
    acc = _mm512_fmadd_pd(_mm512_maskz_loadu_pd(msk, a + i),
                          _mm512_maskz_loadu_pd(msk, b + i), acc);
  }
  return _mm512_reduce_add_pd(acc);
}

double sum_avx512(const double* x, size_t n) {
  __m512d acc = _mm512_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm512_add_pd(acc, _mm512_loadu_pd(x + i));
  if (i < n)
    acc = _mm512_add_pd(acc, _mm512_maskz_loadu_pd(tail_mask(int(n - i)), x + i));
  return _mm512_reduce_add_pd(acc);
}

void ln_fwd_avx512(double* y, double* stats, const double* x,
                   const double* gamma, const double* beta, int rows, int cols,
                   double eps) {
  const int nv = cols & ~7;
  const __mmask8 msk = tail_mask(cols - nv);
  for (int i = 0; i < rows; ++i) {
    const double* xr = x + size_t(i) * cols;
    double* yr = y + size_t(i) * cols;
    const double mu = sum_avx512(xr, size_t(cols)) / cols;
    const __m512d vmu = _mm512_set1_pd(mu);
    __m512d vacc = _mm512_setzero_pd();
    for (int j = 0; j < nv; j += 8) {
      const __m512d d = _mm512_sub_pd(_mm512_loadu_pd(xr + j), vmu);
      vacc = _mm512_fmadd_pd(d, d, vacc);
    }
    if (nv < cols) {
      const __m512d d =
          _mm512_maskz_sub_pd(msk, _mm512_maskz_loadu_pd(msk, xr + nv), vmu);
      vacc = _mm512_fmadd_pd(d, d, vacc);
    }
    const double var = _mm512_reduce_add_pd(vacc) / cols;
    const double rstd = 1.0 / std::sqrt(var + eps);
    stats[2 * i] = mu;
    stats[2 * i + 1] = rstd;
    const __m512d vr = _mm512_set1_pd(rstd);
    for (int j = 0; j < nv; j += 8) {
      const __m512d xhat = _mm512_mul_pd(
          _mm512_sub_pd(_mm512_loadu_pd(xr + j), vmu), vr);
      _mm512_storeu_pd(
          yr + j, _mm512_fmadd_pd(_mm512_loadu_pd(gamma + j), xhat,
                                  _mm512_loadu_pd(beta + j)));
    }
    if (nv < cols) {
      const __m512d xhat = _mm512_mul_pd(
          _mm512_sub_pd(_mm512_maskz_loadu_pd(msk, xr + nv), vmu), vr);
      _mm512_mask_storeu_pd(
          yr + nv, msk,
          _mm512_fmadd_pd(_mm512_maskz_loadu_pd(msk, gamma + nv), xhat,
                          _mm512_maskz_loadu_pd(msk, beta + nv)));
    }
  }
}

void ln_bwd_avx512(double* dx, int dx_mode, double* dgamma, double* dbeta,
                   const double* x, const double* gamma, const double* dy,
                   const double* stats, int rows, int cols) {
  const int nv = cols & ~7;
  const __mmask8 msk = tail_mask(cols - nv);
  for (int i = 0; i < rows; ++i) {
    const double mu = stats[2 * i];
    const double rstd = stats[2 * i + 1];
    const __m512d vmu = _mm512_set1_pd(mu);
    const __m512d vr = _mm512_set1_pd(rstd);
    const double* xr = x + size_t(i) * cols;
    const double* dyr = dy + size_t(i) * cols;
    __m512d acc1 = _mm512_setzero_pd(), acc2 = _mm512_setzero_pd();
    for (int j = 0; j < cols; j += 8) {
      const __mmask8 mm = j + 8 <= cols ? __mmask8(0xff) : msk;
      const __m512d vdy = _mm512_maskz_loadu_pd(mm, dyr + j);
      const __m512d vg = _mm512_maskz_loadu_pd(mm, gamma + j);
      const __m512d xhat = _mm512_mul_pd(
          _mm512_sub_pd(_mm512_maskz_loadu_pd(mm, xr + j), vmu), vr);
      const __m512d dyh = _mm512_mul_pd(vdy, vg);
      acc1 = _mm512_add_pd(acc1, dyh);
      acc2 = _mm512_fmadd_pd(dyh, xhat, acc2);
      if (dgamma)
        _mm512_mask_storeu_pd(
            dgamma + j, mm,
            _mm512_fmadd_pd(vdy, xhat, _mm512_maskz_loadu_pd(mm, dgamma + j)));
      if (dbeta)
        _mm512_mask_storeu_pd(
            dbeta + j, mm,
            _mm512_add_pd(vdy, _mm512_maskz_loadu_pd(mm, dbeta + j)));
    }
    if (dx_mode == 0) continue;
    const double mean_dyh = _mm512_reduce_add_pd(acc1) / cols;
    const double mean_dyh_xhat = _mm512_reduce_add_pd(acc2) / cols;
    const __m512d vm1 = _mm512_set1_pd(mean_dyh);
    const __m512d vm2 = _mm512_set1_pd(mean_dyh_xhat);
    double* dxr = dx + size_t(i) * cols;
    for (int j = 0; j < cols; j += 8) {
      const __mmask8 mm = j + 8 <= cols ? __mmask8(0xff) : msk;
      const __m512d vdy = _mm512_maskz_loadu_pd(mm, dyr + j);
      const __m512d vg = _mm512_maskz_loadu_pd(mm, gamma + j);
      const __m512d xhat = _mm512_mul_pd(
          _mm512_sub_pd(_mm512_maskz_loadu_pd(mm, xr + j), vmu), vr);
      __m512d v = _mm512_sub_pd(_mm512_mul_pd(vdy, vg), vm1);
      v = _mm512_fnmadd_pd(xhat, vm2, v);
      v = _mm512_mul_pd(vr, v);
      if (dx_mode == 2)
        v = _mm512_add_pd(v, _mm512_maskz_loadu_pd(mm, dxr + j));
      _mm512_mask_storeu_pd(dxr + j, mm, v);
    }
  }
}

void adamw_avx512(double* theta, double* m, double* v, const double* g,
                  size_t n, double beta1, double beta2, double inv_bc1,
                  double inv_bc2, double lr, double wd, double eps) {
  const __m512d vb1 = _mm512_set1_pd(beta1);
  const __m512d vb1c = _mm512_set1_pd(1.0 - beta1);
  const __m512d vb2 = _mm512_set1_pd(beta2);
  const __m512d vb2c = _mm512_set1_pd(1.0 - beta2);
  const __m512d vbc1 = _mm512_set1_pd(inv_bc1);
  const __m512d vbc2 = _mm512_set1_pd(inv_bc2);
  const __m512d vlr = _mm512_set1_pd(lr);
  const __m512d vwd = _mm512_set1_pd(wd);
  const __m512d veps = _mm512_set1_pd(eps);
  for (size_t i = 0; i < n; i += 8) {
    const __mmask8 mm = i + 8 <= n ? __mmask8(0xff) : tail_mask(int(n - i));
    const __m512d vg = _mm512_maskz_loadu_pd(mm, g + i);
    __m512d vm = _mm512_maskz_loadu_pd(mm, m + i);
    __m512d vv = _mm512_maskz_loadu_pd(mm, v + i);
    vm = _mm512_add_pd(_mm512_mul_pd(vb1, vm), _mm512_mul_pd(vb1c, vg));
    vv = _mm512_add_pd(_mm512_mul_pd(vb2, vv),
                       _mm512_mul_pd(vb2c, _mm512_mul_pd(vg, vg)));
    _mm512_mask_storeu_pd(m + i, mm, vm);
    _mm512_mask_storeu_pd(v + i, mm, vv);
    const __m512d mhat = _mm512_mul_pd(vm, vbc1);
    const __m512d vhat = _mm512_mul_pd(vv, vbc2);
    const __m512d denom = _mm512_add_pd(_mm512_sqrt_pd(vhat), veps);
    __m512d vt = _mm512_maskz_loadu_pd(mm, theta + i);
    const __m512d update =
        _mm512_add_pd(_mm512_div_pd(mhat, denom), _mm512_mul_pd(vwd, vt));
    vt = _mm512_fnmadd_pd(vlr, update, vt);
    _mm512_mask_storeu_pd(theta + i, mm, vt);
  }
}

void ema_avx512(double* e, const double* p, double decay, size_t n) {
  const __m512d vd = _mm512_set1_pd(decay);
  const __m512d vdc = _mm512_set1_pd(1.0 - decay);
  for (size_t i = 0; i < n; i += 8) {
    const __mmask8 mm = i + 8 <= n ? __mmask8(0xff) : tail_mask(int(n - i));
    const __m512d ve = _mm512_maskz_loadu_pd(mm, e + i);
    const __m512d vp = _mm512_maskz_loadu_pd(mm, p + i);
    _mm512_mask_storeu_pd(
        e + i, mm,
        _mm512_add_pd(_mm512_mul_pd(vd, ve), _mm512_mul_pd(vdc, vp)));
  }
}

}  // namespace

extern const Ops kAvx512Ops;
const Ops kAvx512Ops = {
    gemm_nn_avx512, gemm_tn_avx512,     gemm_nt_avx512, add_avx512,
    hadamard_avx512, hadamard_acc_avx512, axpy_avx512,   scale_avx512,
    relu_avx512,    relu_bwd_avx512,    dot_avx512,     sum_avx512,
    ln_fwd_avx512,  ln_bwd_avx512,      adamw_avx512,   ema_avx512,
    "avx512",
};

}  // namespace nnf::kern

#endif  // x86_64
