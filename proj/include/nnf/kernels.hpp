#pragma once

#include <cstddef>
#include <string>

namespace nnf::kern {

// Dense f64 kernels behind the tensor engine. Three implementations share
// this table: a scalar reference, AVX2, and AVX-512. The active one is
// picked at load time from CPUID and can be overridden with the NNF_ISA
// environment variable or force_isa(). All variants compute the same
// mathematical result; SIMD variants may round differently (FMA, blocked
// sums), which the equivalence tests bound.
struct Ops {
  // C[MxN] (+)= A[MxK] * B[KxN], row-major.
  void (*gemm_nn)(double* c, const double* a, const double* b, int m, int k,
                  int n, bool accumulate);
  // C[MxN] (+)= A^T * B with A stored [KxM]: c[i,j] = sum_k a[k,i] b[k,j].
  void (*gemm_tn)(double* c, const double* a, const double* b, int m, int k,
                  int n, bool accumulate);
  // C[MxN] (+)= A * B^T with B stored [NxK]: c[i,j] = sum_k a[i,k] b[j,k].
  void (*gemm_nt)(double* c, const double* a, const double* b, int m, int k,
                  int n, bool accumulate);

  void (*add)(double* y, const double* a, const double* b, size_t n);
  void (*hadamard)(double* y, const double* a, const double* b, size_t n);
  // y += a .* b
  void (*hadamard_acc)(double* y, const double* a, const double* b, size_t n);
  // y += alpha * x
  void (*axpy)(double* y, double alpha, const double* x, size_t n);
  void (*scale)(double* y, const double* x, double alpha, size_t n);
  void (*relu)(double* y, const double* x, size_t n);
  // dx += dy where the forward output was positive.
  void (*relu_bwd)(double* dx, const double* out, const double* dy, size_t n);
  double (*dot)(const double* a, const double* b, size_t n);
  double (*sum)(const double* x, size_t n);

  // Row-wise layer norm: y = gamma .* (x - mu) * rstd + beta, per row;
  // stats stores (mu, rstd) pairs for the backward pass.
  void (*ln_fwd)(double* y, double* stats, const double* x,
                 const double* gamma, const double* beta, int rows, int cols,
                 double eps);
  // dx_mode: 0 skip, 1 overwrite, 2 accumulate. dgamma/dbeta accumulate
  // when non-null.
  void (*ln_bwd)(double* dx, int dx_mode, double* dgamma, double* dbeta,
                 const double* x, const double* gamma, const double* dy,
                 const double* stats, int rows, int cols);

  // Fused AdamW element update with precomputed 1/(1 - beta^t) factors.
  void (*adamw)(double* theta, double* m, double* v, const double* g,
                size_t n, double beta1, double beta2, double inv_bc1,
                double inv_bc2, double lr, double wd, double eps);
  // e = decay * e + (1 - decay) * p
  void (*ema)(double* e, const double* p, double decay, size_t n);

  const char* name;
};

enum class Isa { Scalar, Avx2, Avx512 };

/// The dispatched kernel table.
const Ops& ops();

/// Individual tables, for equivalence testing. Returns nullptr when the
/// CPU cannot run that variant.
const Ops* ops_for(Isa isa);

Isa active_isa();
/// Force a specific table (throws if unsupported on this CPU).
void force_isa(Isa isa);

std::string isa_name(Isa isa);

}  // namespace nnf::kern
