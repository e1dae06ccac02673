// Scalar reference kernels. These define the semantics the SIMD variants
// are tested against; keep them simple enough to audit by eye.

#include <cmath>
#include <cstring>

#include "nnf/kernels.hpp"

namespace nnf::kern {
namespace {

void gemm_nn_scalar(double* c, const double* a, const double* b, int m, int k,
                    int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * size_t(m) * size_t(n));
  for (int i = 0; i < m; ++i) {
    double* crow = c + size_t(i) * n;
    const double* arow = a + size_t(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + size_t(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn_scalar(double* c, const double* a, const double* b, int m, int k,
                    int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * size_t(m) * size_t(n));
  for (int p = 0; p < k; ++p) {
    const double* arow = a + size_t(p) * m;
    const double* brow = b + size_t(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + size_t(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt_scalar(double* c, const double* a, const double* b, int m, int k,
                    int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + size_t(i) * k;
    double* crow = c + size_t(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + size_t(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

void add_scalar(double* y, const double* a, const double* b, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void hadamard_scalar(double* y, const double* a, const double* b, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void hadamard_acc_scalar(double* y, const double* a, const double* b,
                         size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

void axpy_scalar(double* y, double alpha, const double* x, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double* y, const double* x, double alpha, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

void relu_scalar(double* y, const double* x, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_scalar(double* dx, const double* out, const double* dy,
                     size_t n) {
  for (size_t i = 0; i < n; ++i)
    if (out[i] > 0.0) dx[i] += dy[i];
}

double dot_scalar(const double* a, const double* b, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_scalar(const double* x, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

void ln_fwd_scalar(double* y, double* stats, const double* x,
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

void ln_bwd_scalar(double* dx, int dx_mode, double* dgamma, double* dbeta,
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
      const double v = rstd * (dyr[j] * gamma[j] - mean_dyh - xhat * mean_dyh_xhat);
      dxr[j] = dx_mode == 2 ? dxr[j] + v : v;
    }
  }
}

void adamw_scalar(double* theta, double* m, double* v, const double* g,
                  size_t n, double beta1, double beta2, double inv_bc1,
                  double inv_bc2, double lr, double wd, double eps) {
  for (size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] * inv_bc1;
    const double vhat = v[i] * inv_bc2;
    theta[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * theta[i]);
  }
}

void ema_scalar(double* e, const double* p, double decay, size_t n) {
  for (size_t i = 0; i < n; ++i) e[i] = decay * e[i] + (1.0 - decay) * p[i];
}

}  // namespace

extern const Ops kScalarOps;
const Ops kScalarOps = {
    gemm_nn_scalar, gemm_tn_scalar,     gemm_nt_scalar, add_scalar,
    hadamard_scalar, hadamard_acc_scalar, axpy_scalar,   scale_scalar,
    relu_scalar,    relu_bwd_scalar,    dot_scalar,     sum_scalar,
    ln_fwd_scalar,  ln_bwd_scalar,      adamw_scalar,   ema_scalar,
    "scalar",
};

}  // namespace nnf::kern
