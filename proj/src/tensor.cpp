#include "nnf/tensor.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "nnf/error.hpp"
#include "nnf/kernels.hpp"
#include "nnf/rng.hpp"

namespace nnf::ad {

namespace {

// Bump allocator backed by fixed blocks. reset() rewinds without freeing,
// so a tape reused across graphs stops allocating after warmup.
class Arena {
 public:
  static constexpr size_t kBlockDoubles = size_t(1) << 16;

  double* alloc(size_t n) {
    if (n > kBlockDoubles) {
      oversize_.push_back(std::make_unique<double[]>(n));
      return oversize_.back().get();
    }
    if (block_ == size_t(-1) || used_ + n > kBlockDoubles) {
      ++block_;
      if (block_ >= blocks_.size())
        blocks_.push_back(std::make_unique<double[]>(kBlockDoubles));
      used_ = 0;
    }
    double* p = blocks_[block_].get() + used_;
    used_ += n;
    return p;
  }

  void reset() {
    block_ = size_t(-1);
    used_ = 0;
    oversize_.clear();
  }

 private:
  std::vector<std::unique_ptr<double[]>> blocks_;
  std::vector<std::unique_ptr<double[]>> oversize_;
  size_t block_ = size_t(-1);
  size_t used_ = 0;
};

enum class OpKind : uint8_t {
  Leaf,
  Const,
  MatMul,
  MatMulNT,
  Add,
  AddRowVec,
  Hadamard,
  Relu,
  ConcatCols,
  ConcatRows,
  Transpose,
  Scale,
  Mean,
  SumRows,
  RowSelect,
  Dropout,
  LayerNorm,
  MaskedSoftmax,
  MseLoss,
};

struct Node {
  OpKind op = OpKind::Const;
  Shape shape;
  int in0 = -1, in1 = -1, in2 = -1;
  int iarg = 0;
  double s0 = 0.0;
  const uint8_t* mask = nullptr;
  const double* target = nullptr;
  double* val = nullptr;
  const double* val_t = nullptr;  // transposed mirror, leaves only
  double* grad = nullptr;
  double* aux = nullptr;
  bool requires_grad = false;
  bool grad_ready = false;
  bool external_grad = false;
};

}  // namespace

struct Tape::Impl {
  std::vector<Node> nodes;
  Arena arena;

  Node& at(int id) { return nodes[size_t(id)]; }

  int push(Node node) {
    nodes.push_back(node);
    return int(nodes.size()) - 1;
  }

  double* alloc_val(Node& node) {
    node.val = arena.alloc(node.shape.numel());
    return node.val;
  }

  // Consumers either overwrite (first touch) or accumulate. External
  // leaves always accumulate so repeated backward calls keep adding.
  bool sink_ready(const Node& node) const {
    return node.grad_ready || node.external_grad;
  }

  double* grad_buf(Node& node) {
    if (!node.grad) node.grad = arena.alloc(node.shape.numel());
    return node.grad;
  }

  // For adjoints that only write part of the buffer.
  double* grad_buf_zeroed(Node& node) {
    double* g = grad_buf(node);
    if (!sink_ready(node)) {
      std::memset(g, 0, node.shape.numel() * sizeof(double));
      node.grad_ready = true;
    }
    return g;
  }

  void add_grad(Node& node, const double* src) {
    double* g = grad_buf(node);
    const size_t n = node.shape.numel();
    if (sink_ready(node))
      kern::ops().axpy(g, 1.0, src, n);
    else
      std::memcpy(g, src, n * sizeof(double));
    node.grad_ready = true;
  }

  Node unary(OpKind op, const Tensor& a, Shape shape) {
    Node node;
    node.op = op;
    node.shape = shape;
    node.in0 = a.id();
    node.requires_grad = at(a.id()).requires_grad;
    return node;
  }

  Node binary(OpKind op, const Tensor& a, const Tensor& b, Shape shape) {
    Node node;
    node.op = op;
    node.shape = shape;
    node.in0 = a.id();
    node.in1 = b.id();
    node.requires_grad =
        at(a.id()).requires_grad || at(b.id()).requires_grad;
    return node;
  }

  void backward_from(int root);
  void backward_node(int id);
};

Tape::Tape() : impl_(std::make_unique<Impl>()) {}
Tape::~Tape() = default;

void Tape::reset() {
  impl_->nodes.clear();
  impl_->arena.reset();
}

int Tape::size() const { return int(impl_->nodes.size()); }

const Shape& Tensor::shape() const { return tape_->impl_->at(id_).shape; }
const double* Tensor::data() const { return tape_->impl_->at(id_).val; }
const double* Tensor::grad() const { return tape_->impl_->at(id_).grad; }
bool Tensor::requires_grad() const {
  return tape_->impl_->at(id_).requires_grad;
}

double Tensor::scalar_value() const {
  if (shape().numel() != 1)
    raise(ErrorCode::NotScalar, "tensor has " + std::to_string(shape().numel()) +
                                    " elements");
  return data()[0];
}

// ---- leaves ----

Tensor Tape::leaf(const ParamRef& ref) {
  if (ref.size != size_t(ref.rows) * size_t(ref.cols))
    raise(ErrorCode::ShapeMismatch, "param '" + ref.name + "' size/shape");
  Node node;
  node.op = OpKind::Leaf;
  node.shape = ref.rows == 1 && ref.cols != 1 ? Shape::vec(ref.cols)
                                              : Shape::mat(ref.rows, ref.cols);
  node.val = ref.value;
  node.val_t = ref.value_t;
  node.grad = ref.grad;
  node.requires_grad = true;
  node.external_grad = true;
  return Tensor(this, impl_->push(node));
}

Tensor Tape::constant(const double* data, Shape shape) {
  Node node;
  node.op = OpKind::Const;
  node.shape = shape;
  node.val = const_cast<double*>(data);
  return Tensor(this, impl_->push(node));
}

Tensor Tape::value(std::span<const double> data, Shape shape) {
  if (data.size() != shape.numel())
    raise(ErrorCode::ShapeMismatch, "value() data length");
  Node node;
  node.op = OpKind::Const;
  node.shape = shape;
  impl_->alloc_val(node);
  std::memcpy(node.val, data.data(), data.size() * sizeof(double));
  return Tensor(this, impl_->push(node));
}

// ---- helpers ----

namespace {

void require_rank2(const Tensor& t, const char* what) {
  if (t.shape().rank > 2)
    raise(ErrorCode::ShapeMismatch, std::string(what) + " requires rank <= 2");
}

}  // namespace

// ---- primitives ----

Tensor Tape::matmul(Tensor a, Tensor b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows())
    raise(ErrorCode::ShapeMismatch,
          "matmul " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
              " @ " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  Node node = impl_->binary(OpKind::MatMul, a, b, Shape::mat(a.rows(), b.cols()));
  impl_->alloc_val(node);
  kern::ops().gemm_nn(node.val, a.data(), b.data(), a.rows(), a.cols(),
                      b.cols(), false);
  return Tensor(this, impl_->push(node));
}

Tensor Tape::matmul_nt(Tensor a, Tensor b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.cols() != b.cols())
    raise(ErrorCode::ShapeMismatch, "matmul_nt inner dims");
  Node node = impl_->binary(OpKind::MatMulNT, a, b, Shape::mat(a.rows(), b.rows()));
  impl_->alloc_val(node);
  kern::ops().gemm_nt(node.val, a.data(), b.data(), a.rows(), a.cols(),
                      b.rows(), false);
  return Tensor(this, impl_->push(node));
}

Tensor Tape::add(Tensor a, Tensor b) {
  if (!a.shape().same_as(b.shape()))
    raise(ErrorCode::ShapeMismatch, "add operand shapes differ");
  Node node = impl_->binary(OpKind::Add, a, b, a.shape());
  impl_->alloc_val(node);
  kern::ops().add(node.val, a.data(), b.data(), node.shape.numel());
  return Tensor(this, impl_->push(node));
}

Tensor Tape::add_rowvec(Tensor a, Tensor bias) {
  require_rank2(a, "add_rowvec");
  if (bias.numel() != size_t(a.cols()))
    raise(ErrorCode::ShapeMismatch, "bias length vs columns");
  Node node = impl_->binary(OpKind::AddRowVec, a, bias, a.shape());
  impl_->alloc_val(node);
  const int m = a.rows(), n = a.cols();
  for (int i = 0; i < m; ++i)
    kern::ops().add(node.val + size_t(i) * n, a.data() + size_t(i) * n,
                    bias.data(), size_t(n));
  return Tensor(this, impl_->push(node));
}

Tensor Tape::hadamard(Tensor a, Tensor b) {
  if (!a.shape().same_as(b.shape()))
    raise(ErrorCode::ShapeMismatch, "hadamard operand shapes differ");
  Node node = impl_->binary(OpKind::Hadamard, a, b, a.shape());
  impl_->alloc_val(node);
  kern::ops().hadamard(node.val, a.data(), b.data(), node.shape.numel());
  return Tensor(this, impl_->push(node));
}

Tensor Tape::relu(Tensor a) {
  Node node = impl_->unary(OpKind::Relu, a, a.shape());
  impl_->alloc_val(node);
  kern::ops().relu(node.val, a.data(), node.shape.numel());
  return Tensor(this, impl_->push(node));
}

Tensor Tape::concat_cols(Tensor a, Tensor b) {
  require_rank2(a, "concat_cols");
  require_rank2(b, "concat_cols");
  if (a.rows() != b.rows())
    raise(ErrorCode::ShapeMismatch, "concat_cols row counts differ");
  const int m = a.rows(), n1 = a.cols(), n2 = b.cols();
  Node node = impl_->binary(OpKind::ConcatCols, a, b, Shape::mat(m, n1 + n2));
  impl_->alloc_val(node);
  for (int i = 0; i < m; ++i) {
    std::memcpy(node.val + size_t(i) * (n1 + n2), a.data() + size_t(i) * n1,
                size_t(n1) * sizeof(double));
    std::memcpy(node.val + size_t(i) * (n1 + n2) + n1,
                b.data() + size_t(i) * n2, size_t(n2) * sizeof(double));
  }
  return Tensor(this, impl_->push(node));
}

Tensor Tape::concat_rows(Tensor a, Tensor b) {
  require_rank2(a, "concat_rows");
  require_rank2(b, "concat_rows");
  if (a.cols() != b.cols())
    raise(ErrorCode::ShapeMismatch, "concat_rows column counts differ");
  const int n = a.cols();
  Node node = impl_->binary(OpKind::ConcatRows, a, b, Shape::mat(a.rows() + b.rows(), n));
  impl_->alloc_val(node);
  std::memcpy(node.val, a.data(), a.numel() * sizeof(double));
  std::memcpy(node.val + a.numel(), b.data(), b.numel() * sizeof(double));
  return Tensor(this, impl_->push(node));
}

Tensor Tape::transpose(Tensor a) {
  require_rank2(a, "transpose");
  const int m = a.rows(), n = a.cols();
  Node node = impl_->unary(OpKind::Transpose, a, Shape::mat(n, m));
  impl_->alloc_val(node);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      node.val[size_t(j) * m + i] = a.data()[size_t(i) * n + j];
  return Tensor(this, impl_->push(node));
}

Tensor Tape::scale(Tensor a, double c) {
  Node node = impl_->unary(OpKind::Scale, a, a.shape());
  node.s0 = c;
  impl_->alloc_val(node);
  kern::ops().scale(node.val, a.data(), c, node.shape.numel());
  return Tensor(this, impl_->push(node));
}

Tensor Tape::mean(Tensor a) {
  Node node = impl_->unary(OpKind::Mean, a, Shape::scalar());
  impl_->alloc_val(node);
  node.val[0] = kern::ops().sum(a.data(), a.numel()) / double(a.numel());
  return Tensor(this, impl_->push(node));
}

Tensor Tape::sum_rows(Tensor a) {
  require_rank2(a, "sum_rows");
  const int m = a.rows(), n = a.cols();
  Node node = impl_->unary(OpKind::SumRows, a, Shape::mat(1, n));
  impl_->alloc_val(node);
  std::memcpy(node.val, a.data(), size_t(n) * sizeof(double));
  for (int i = 1; i < m; ++i)
    kern::ops().axpy(node.val, 1.0, a.data() + size_t(i) * n, size_t(n));
  return Tensor(this, impl_->push(node));
}

Tensor Tape::row_select(Tensor a, int row) {
  require_rank2(a, "row_select");
  if (row < 0 || row >= a.rows())
    raise(ErrorCode::IndexOutOfRange, "row_select row " + std::to_string(row));
  Node node = impl_->unary(OpKind::RowSelect, a, Shape::mat(1, a.cols()));
  node.iarg = row;
  impl_->alloc_val(node);
  std::memcpy(node.val, a.data() + size_t(row) * a.cols(),
              size_t(a.cols()) * sizeof(double));
  return Tensor(this, impl_->push(node));
}

Tensor Tape::dropout(Tensor a, double p, bool train, uint64_t seed) {
  if (p < 0.0 || p >= 1.0)
    raise(ErrorCode::OutOfRange, "dropout p must be in [0, 1)");
  if (!train || p == 0.0) return a;  // identity at eval time
  Node node = impl_->unary(OpKind::Dropout, a, a.shape());
  node.s0 = p;
  impl_->alloc_val(node);
  const size_t count = node.shape.numel();
  node.aux = impl_->arena.alloc(count);
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - p);
  for (size_t i = 0; i < count; ++i)
    node.aux[i] = rng.next_double() < p ? 0.0 : keep_scale;
  kern::ops().hadamard(node.val, a.data(), node.aux, count);
  return Tensor(this, impl_->push(node));
}

Tensor Tape::layer_norm(Tensor a, Tensor gamma, Tensor beta, double eps) {
  require_rank2(a, "layer_norm");
  if (eps <= 0.0) raise(ErrorCode::OutOfRange, "layer_norm eps must be > 0");
  const int m = a.rows(), n = a.cols();
  if (gamma.numel() != size_t(n) || beta.numel() != size_t(n))
    raise(ErrorCode::ShapeMismatch, "layer_norm affine length vs columns");
  Node node = impl_->binary(OpKind::LayerNorm, a, gamma, a.shape());
  node.in2 = beta.id();
  node.requires_grad = node.requires_grad || impl_->at(beta.id()).requires_grad;
  node.s0 = eps;
  impl_->alloc_val(node);
  node.aux = impl_->arena.alloc(size_t(2) * m);  // per row: mean, rstd
  kern::ops().ln_fwd(node.val, node.aux, a.data(), gamma.data(), beta.data(),
                     m, n, eps);
  return Tensor(this, impl_->push(node));
}

Tensor Tape::softmax_rows_masked(Tensor logits, const uint8_t* mask,
                                 double scale) {
  require_rank2(logits, "softmax_rows_masked");
  if (scale <= 0.0) raise(ErrorCode::OutOfRange, "softmax scale must be > 0");
  const int m = logits.rows(), n = logits.cols();
  Node node = impl_->unary(OpKind::MaskedSoftmax, logits, logits.shape());
  node.mask = mask;
  node.s0 = scale;
  impl_->alloc_val(node);
  const double inv_scale = 1.0 / scale;
  for (int i = 0; i < m; ++i) {
    const double* l = logits.data() + size_t(i) * n;
    const uint8_t* mrow = mask + size_t(i) * n;
    double* y = node.val + size_t(i) * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (mrow[j] && l[j] * inv_scale > mx) mx = l[j] * inv_scale;
    if (mx == -std::numeric_limits<double>::infinity())
      raise(ErrorCode::EmptyRowMask,
            "row " + std::to_string(i) + " has no allowed position");
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (mrow[j]) {
        y[j] = std::exp(l[j] * inv_scale - mx);
        sum += y[j];
      } else {
        y[j] = 0.0;
      }
    }
    const double inv_sum = 1.0 / sum;
    for (int j = 0; j < n; ++j)
      if (mrow[j]) y[j] *= inv_sum;
  }
  return Tensor(this, impl_->push(node));
}

Tensor Tape::mse_loss(Tensor pred, std::span<const double> target) {
  if (pred.numel() != target.size() || target.empty())
    raise(ErrorCode::ShapeMismatch, "mse_loss length mismatch");
  Node node = impl_->unary(OpKind::MseLoss, pred, Shape::scalar());
  double* saved = impl_->arena.alloc(target.size());
  std::memcpy(saved, target.data(), target.size() * sizeof(double));
  node.target = saved;
  impl_->alloc_val(node);
  double acc = 0.0;
  const double* p = pred.data();
  for (size_t i = 0; i < target.size(); ++i) {
    const double d = p[i] - saved[i];
    acc += d * d;
  }
  node.val[0] = acc / double(target.size());
  return Tensor(this, impl_->push(node));
}

// ---- reverse pass ----

void Tape::Impl::backward_node(int id) {
  Node& node = at(id);
  const auto& k = kern::ops();
  const double* gout = node.grad;

  switch (node.op) {
    case OpKind::Leaf:
    case OpKind::Const:
      break;

    case OpKind::MatMul: {
      Node& a = at(node.in0);
      Node& b = at(node.in1);
      const int m = a.shape.rows(), kk = a.shape.cols(), n = b.shape.cols();
      if (a.requires_grad) {
        if (b.val_t)  // B^T available contiguously: row-streaming form
          k.gemm_nn(grad_buf(a), gout, b.val_t, m, n, kk, sink_ready(a));
        else
          k.gemm_nt(grad_buf(a), gout, b.val, m, n, kk, sink_ready(a));
        a.grad_ready = true;
      }
      if (b.requires_grad) {
        k.gemm_tn(grad_buf(b), a.val, gout, kk, m, n, sink_ready(b));
        b.grad_ready = true;
      }
      break;
    }

    case OpKind::MatMulNT: {
      Node& a = at(node.in0);
      Node& b = at(node.in1);
      const int m = a.shape.rows(), kk = a.shape.cols(), r = b.shape.rows();
      if (a.requires_grad) {
        k.gemm_nn(grad_buf(a), gout, b.val, m, r, kk, sink_ready(a));
        a.grad_ready = true;
      }
      if (b.requires_grad) {
        k.gemm_tn(grad_buf(b), gout, a.val, r, m, kk, sink_ready(b));
        b.grad_ready = true;
      }
      break;
    }

    case OpKind::Add: {
      for (int in : {node.in0, node.in1}) {
        Node& x = at(in);
        if (x.requires_grad) add_grad(x, gout);
      }
      break;
    }

    case OpKind::AddRowVec: {
      Node& a = at(node.in0);
      Node& bias = at(node.in1);
      if (a.requires_grad) add_grad(a, gout);
      if (bias.requires_grad) {
        double* g = grad_buf_zeroed(bias);
        const int m = node.shape.rows(), n = node.shape.cols();
        for (int i = 0; i < m; ++i)
          k.axpy(g, 1.0, gout + size_t(i) * n, size_t(n));
      }
      break;
    }

    case OpKind::Hadamard: {
      Node& a = at(node.in0);
      Node& b = at(node.in1);
      const size_t count = node.shape.numel();
      if (a.requires_grad) {
        double* g = grad_buf(a);
        if (sink_ready(a))
          k.hadamard_acc(g, gout, b.val, count);
        else
          k.hadamard(g, gout, b.val, count);
        a.grad_ready = true;
      }
      if (b.requires_grad) {
        double* g = grad_buf(b);
        if (sink_ready(b))
          k.hadamard_acc(g, gout, a.val, count);
        else
          k.hadamard(g, gout, a.val, count);
        b.grad_ready = true;
      }
      break;
    }

    case OpKind::Relu: {
      Node& a = at(node.in0);
      if (a.requires_grad)
        k.relu_bwd(grad_buf_zeroed(a), node.val, gout, node.shape.numel());
      break;
    }

    case OpKind::ConcatCols: {
      Node& a = at(node.in0);
      Node& b = at(node.in1);
      const int m = node.shape.rows();
      const int n1 = a.shape.cols(), n2 = b.shape.cols();
      if (a.requires_grad) {
        const bool acc = sink_ready(a);
        double* g = grad_buf(a);
        for (int i = 0; i < m; ++i) {
          const double* src = gout + size_t(i) * (n1 + n2);
          double* dst = g + size_t(i) * n1;
          if (acc)
            k.axpy(dst, 1.0, src, size_t(n1));
          else
            std::memcpy(dst, src, size_t(n1) * sizeof(double));
        }
        a.grad_ready = true;
      }
      if (b.requires_grad) {
        const bool acc = sink_ready(b);
        double* g = grad_buf(b);
        for (int i = 0; i < m; ++i) {
          const double* src = gout + size_t(i) * (n1 + n2) + n1;
          double* dst = g + size_t(i) * n2;
          if (acc)
            k.axpy(dst, 1.0, src, size_t(n2));
          else
            std::memcpy(dst, src, size_t(n2) * sizeof(double));
        }
        b.grad_ready = true;
      }
      break;
    }

    case OpKind::ConcatRows: {
      Node& a = at(node.in0);
      Node& b = at(node.in1);
      if (a.requires_grad) add_grad(a, gout);
      if (b.requires_grad) {
        double* g = grad_buf(b);
        const double* src = gout + a.shape.numel();
        if (sink_ready(b))
          k.axpy(g, 1.0, src, b.shape.numel());
        else
          std::memcpy(g, src, b.shape.numel() * sizeof(double));
        b.grad_ready = true;
      }
      break;
    }

    case OpKind::Transpose: {
      Node& a = at(node.in0);
      if (!a.requires_grad) break;
      const int m = a.shape.rows(), n = a.shape.cols();
      const bool acc = sink_ready(a);
      double* g = grad_buf(a);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double v = gout[size_t(j) * m + i];
          if (acc)
            g[size_t(i) * n + j] += v;
          else
            g[size_t(i) * n + j] = v;
        }
      a.grad_ready = true;
      break;
    }

    case OpKind::Scale: {
      Node& a = at(node.in0);
      if (!a.requires_grad) break;
      double* g = grad_buf(a);
      if (sink_ready(a))
        k.axpy(g, node.s0, gout, node.shape.numel());
      else
        k.scale(g, gout, node.s0, node.shape.numel());
      a.grad_ready = true;
      break;
    }

    case OpKind::Mean: {
      Node& a = at(node.in0);
      if (!a.requires_grad) break;
      const double v = gout[0] / double(a.shape.numel());
      const bool acc = sink_ready(a);
      double* g = grad_buf(a);
      for (size_t i = 0; i < a.shape.numel(); ++i)
        g[i] = acc ? g[i] + v : v;
      a.grad_ready = true;
      break;
    }

    case OpKind::SumRows: {
      Node& a = at(node.in0);
      if (!a.requires_grad) break;
      const int m = a.shape.rows(), n = a.shape.cols();
      const bool acc = sink_ready(a);
      double* g = grad_buf(a);
      for (int i = 0; i < m; ++i) {
        double* dst = g + size_t(i) * n;
        if (acc)
          k.axpy(dst, 1.0, gout, size_t(n));
        else
          std::memcpy(dst, gout, size_t(n) * sizeof(double));
      }
      a.grad_ready = true;
      break;
    }

    case OpKind::RowSelect: {
      Node& a = at(node.in0);
      if (!a.requires_grad) break;
      double* g = grad_buf_zeroed(a);
      k.axpy(g + size_t(node.iarg) * a.shape.cols(), 1.0, gout,
             size_t(a.shape.cols()));
      break;
    }

    case OpKind::Dropout: {
      Node& a = at(node.in0);
      if (!a.requires_grad) break;
      double* g = grad_buf(a);
      if (sink_ready(a))
        k.hadamard_acc(g, gout, node.aux, node.shape.numel());
      else
        k.hadamard(g, gout, node.aux, node.shape.numel());
      a.grad_ready = true;
      break;
    }

    case OpKind::LayerNorm: {
      Node& a = at(node.in0);
      Node& gamma = at(node.in1);
      Node& beta = at(node.in2);
      const int m = node.shape.rows(), n = node.shape.cols();
      double* dgamma = gamma.requires_grad ? grad_buf_zeroed(gamma) : nullptr;
      double* dbeta = beta.requires_grad ? grad_buf_zeroed(beta) : nullptr;
      int dx_mode = 0;
      double* dx = nullptr;
      if (a.requires_grad) {
        dx_mode = sink_ready(a) ? 2 : 1;
        dx = grad_buf(a);
        a.grad_ready = true;
      }
      k.ln_bwd(dx, dx_mode, dgamma, dbeta, a.val, gamma.val, gout, node.aux,
               m, n);
      break;
    }

    case OpKind::MaskedSoftmax: {
      Node& a = at(node.in0);
      if (!a.requires_grad) break;
      const int m = node.shape.rows(), n = node.shape.cols();
      const double inv_scale = 1.0 / node.s0;
      double* g = grad_buf_zeroed(a);
      for (int i = 0; i < m; ++i) {
        const double* y = node.val + size_t(i) * n;
        const double* dy = gout + size_t(i) * n;
        const uint8_t* mrow = node.mask + size_t(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j)
          if (mrow[j]) dot += y[j] * dy[j];
        double* grow = g + size_t(i) * n;
        for (int j = 0; j < n; ++j)
          if (mrow[j]) grow[j] += inv_scale * y[j] * (dy[j] - dot);
      }
      break;
    }

    case OpKind::MseLoss: {
      Node& a = at(node.in0);
      if (!a.requires_grad) break;
      const size_t count = a.shape.numel();
      const double coeff = 2.0 * gout[0] / double(count);
      const bool acc = sink_ready(a);
      double* g = grad_buf(a);
      for (size_t i = 0; i < count; ++i) {
        const double v = coeff * (a.val[i] - node.target[i]);
        g[i] = acc ? g[i] + v : v;
      }
      a.grad_ready = true;
      break;
    }
  }
}

void Tape::Impl::backward_from(int root) {
  for (int i = 0; i <= root; ++i) nodes[size_t(i)].grad_ready = false;
  Node& loss = at(root);
  if (loss.external_grad) {  // d loss / d loss = 1, straight into the leaf
    loss.grad[0] += 1.0;
    return;
  }
  if (!loss.grad) loss.grad = arena.alloc(1);
  loss.grad[0] = 1.0;
  loss.grad_ready = true;
  for (int i = root; i >= 0; --i) {
    Node& node = nodes[size_t(i)];
    if (!node.requires_grad || !node.grad_ready) continue;
    backward_node(i);
  }
}

void Tape::backward(Tensor loss) {
  if (loss.tape() != this)
    raise(ErrorCode::DetachedGraph, "loss belongs to another tape");
  if (loss.numel() != 1)
    raise(ErrorCode::NotScalar, "backward root must be scalar");
  if (!loss.requires_grad())
    raise(ErrorCode::DetachedGraph,
          "loss does not depend on any trainable leaf");
  impl_->backward_from(loss.id());
}

// ---- finite differences ----

GradCheckReport finite_diff_check(const std::function<double()>& value_fn,
                                  const std::function<void()>& grad_fn,
                                  std::span<ParamRef> params, double h,
                                  double tol) {
  if (h < 1e-7 || h > 1e-3)
    raise(ErrorCode::OutOfRange, "finite difference step outside [1e-7, 1e-3]");
  const double probe1 = value_fn();
  const double probe2 = value_fn();
  if (std::memcmp(&probe1, &probe2, sizeof(double)) != 0)
    raise(ErrorCode::NonDeterministicFunction,
          "two forward passes disagree; disable dropout for gradient checks");

  grad_fn();

  GradCheckReport report;
  for (const ParamRef& p : params) {
    for (size_t i = 0; i < p.size; ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double fp = value_fn();
      p.value[i] = saved - h;
      const double fm = value_fn();
      p.value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p.grad[i];
      const double denom =
          std::max({1.0, std::abs(analytic), std::abs(numeric)});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.coords_checked;
      if (rel >= report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = {p.name, i, analytic, numeric, rel};
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace nnf::ad
