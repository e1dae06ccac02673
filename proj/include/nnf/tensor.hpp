#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nnf::ad {

/// Dense shape, rank 1..3. Elementwise primitives accept any rank;
/// matrix primitives (matmul, layer_norm, softmax, concat) require rank 2.
struct Shape {
  int rank = 2;
  int d0 = 1, d1 = 1, d2 = 1;

  static Shape scalar() { return {1, 1, 1, 1}; }
  static Shape vec(int n) { return {1, n, 1, 1}; }
  static Shape mat(int r, int c) { return {2, r, c, 1}; }
  static Shape cube(int a, int b, int c) { return {3, a, b, c}; }

  size_t numel() const { return size_t(d0) * size_t(d1) * size_t(d2); }
  // rank-2 view used by matrix ops
  int rows() const { return rank <= 1 ? 1 : d0; }
  int cols() const { return rank <= 1 ? d0 : d1; }
  bool same_as(const Shape& o) const {
    return rank == o.rank && d0 == o.d0 && d1 == o.d1 && d2 == o.d2;
  }
};

class Tape;

/// Lightweight handle into a tape. Copyable; the tape owns all storage.
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  int rows() const { return shape().rows(); }
  int cols() const { return shape().cols(); }
  size_t numel() const { return shape().numel(); }

  const double* data() const;
  /// Gradient buffer after backward(); nullptr if none was propagated.
  const double* grad() const;
  bool requires_grad() const;

  double scalar_value() const;  // NotScalar unless numel == 1

  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Tensor(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Named view of an external parameter (storage owned by the model).
/// value_t, when set, points at a column-major mirror (the transpose) kept
/// in sync by the owner; backward then runs matmul adjoints in the faster
/// row-streaming form instead of the dot-product form.
struct ParamRef {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;
  size_t size = 0;
  int rows = 0, cols = 0;
  const double* value_t = nullptr;
};

/// Records forward primitives and replays their adjoints in reverse.
/// Single-owner, single-threaded; independent tapes may run in parallel.
/// reset() rewinds the arena without releasing its memory, so per-graph
/// reuse does not churn the allocator.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void reset();
  int size() const;

  // ---- leaves ----
  /// Trainable leaf bound to external storage; backward accumulates into
  /// ref.grad (repeated backward calls keep adding).
  Tensor leaf(const ParamRef& ref);
  /// Borrowed read-only buffer; caller keeps it alive for the tape's life.
  Tensor constant(const double* data, Shape shape);
  /// Copies data into the tape arena (convenient for tests).
  Tensor value(std::span<const double> data, Shape shape);

  // ---- primitives ----
  Tensor matmul(Tensor a, Tensor b);
  /// a @ b^T without materializing the transpose.
  Tensor matmul_nt(Tensor a, Tensor b);
  Tensor add(Tensor a, Tensor b);
  /// Broadcast row-vector add: a[m x n] + bias[n].
  Tensor add_rowvec(Tensor a, Tensor bias);
  Tensor hadamard(Tensor a, Tensor b);
  Tensor relu(Tensor a);
  Tensor concat_cols(Tensor a, Tensor b);
  /// Vertical stack: [a; b]. Column counts must match.
  Tensor concat_rows(Tensor a, Tensor b);
  Tensor transpose(Tensor a);
  Tensor scale(Tensor a, double c);
  Tensor mean(Tensor a);
  Tensor sum_rows(Tensor a);
  Tensor row_select(Tensor a, int row);
  /// Train-time inverted dropout, deterministic in seed; identity when
  /// train is false or p == 0.
  Tensor dropout(Tensor a, double p, bool train, uint64_t seed);
  Tensor layer_norm(Tensor a, Tensor gamma, Tensor beta, double eps = 1e-5);
  /// Row softmax of logits/scale over mask-allowed positions; masked
  /// outputs are exactly zero and receive exactly zero logit gradient.
  /// mask is row-major rows x cols bytes, borrowed.
  Tensor softmax_rows_masked(Tensor logits, const uint8_t* mask, double scale);
  Tensor mse_loss(Tensor pred, std::span<const double> target);

  /// Reverse pass from a scalar; leaf gradients accumulate.
  void backward(Tensor loss);

 private:
  friend class Tensor;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct GradCheckEntry {
  std::string param;
  size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  GradCheckEntry worst;
  size_t coords_checked = 0;
  bool pass = false;
};

/// Central-difference check of d(value_fn)/d(params) against the gradients
/// grad_fn leaves in each ParamRef's grad buffer. value_fn must be
/// deterministic; it is evaluated twice up front and must agree bitwise.
/// Relative error uses denominator max(1, |analytic|, |numeric|).
GradCheckReport finite_diff_check(const std::function<double()>& value_fn,
                                  const std::function<void()>& grad_fn,
                                  std::span<ParamRef> params, double h,
                                  double tol);

}  // namespace nnf::ad
