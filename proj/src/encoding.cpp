#include "nnf/encoding.hpp"

#include <cmath>

#include "nnf/error.hpp"

namespace nnf {

void EncodingConfig::validate() const {
  if (op_onehot_dim < 1)
    raise(ErrorCode::ConfigError, "op_onehot_dim must be >= 1");
  if (attr_sin_dim < 0 || shape_sin_dim < 0)
    raise(ErrorCode::ConfigError, "sinusoidal dims must be >= 0");
  if (attr_sin_dim % 2 != 0 || shape_sin_dim % 2 != 0)
    raise(ErrorCode::ConfigError, "sinusoidal dims must be even");
  if (attr_sin_dim % kAttrSlots != 0)
    raise(ErrorCode::ConfigError, "attr_sin_dim must split into 8 slots");
  if (shape_sin_dim % kShapeSlots != 0)
    raise(ErrorCode::ConfigError, "shape_sin_dim must split into 4 slots");
  if ((attr_sin_dim / kAttrSlots) % 2 != 0 ||
      (shape_sin_dim / kShapeSlots) % 2 != 0)
    raise(ErrorCode::ConfigError, "per-slot sinusoidal width must be even");
  if (base_frequency <= 1.0)
    raise(ErrorCode::ConfigError, "base_frequency must be > 1");
}

std::vector<double> one_hot(int op_type, int dim) {
  if (op_type < 0 || op_type >= dim)
    raise(ErrorCode::IndexOutOfRange,
          "op_type " + std::to_string(op_type) + " not in [0, " +
              std::to_string(dim) + ")");
  std::vector<double> v(size_t(dim), 0.0);
  v[size_t(op_type)] = 1.0;
  return v;
}

namespace {

void sinusoidal_into(double x, int dim, double base, double* out) {
  if (!std::isfinite(x)) raise(ErrorCode::NonFinite, "sinusoidal input");
  for (int j = 0; j < dim / 2; ++j) {
    const double freq = std::pow(base, double(2 * j) / double(dim));
    out[2 * j] = std::sin(x / freq);
    out[2 * j + 1] = std::cos(x / freq);
  }
}

}  // namespace

std::vector<double> sinusoidal(double x, int dim, double base) {
  if (dim < 2 || dim % 2 != 0)
    raise(ErrorCode::ShapeMismatch, "sinusoidal dim must be positive and even");
  if (base <= 1.0) raise(ErrorCode::ShapeMismatch, "base must be > 1");
  std::vector<double> v(static_cast<size_t>(dim));
  sinusoidal_into(x, dim, base, v.data());
  return v;
}

std::vector<double> encode_graph(const Dag& dag, const EncodingConfig& cfg) {
  cfg.validate();
  dag_validate(dag);
  const int d0 = cfg.total_dim();
  const int attr_slot = cfg.attr_sin_dim / EncodingConfig::kAttrSlots;
  const int shape_slot = cfg.shape_sin_dim / EncodingConfig::kShapeSlots;

  std::vector<double> z(size_t(dag.n) * size_t(d0), 0.0);
  for (int i = 0; i < dag.n; ++i) {
    const NodeDescriptor& nd = dag.nodes[size_t(i)];
    double* row = z.data() + size_t(i) * size_t(d0);
    if (nd.op_type >= cfg.op_onehot_dim)
      raise(ErrorCode::IndexOutOfRange,
            "node " + std::to_string(i) + " op_type exceeds one-hot width");
    row[nd.op_type] = 1.0;

    double* attr_base = row + cfg.op_onehot_dim;
    for (int s = 0; s < EncodingConfig::kAttrSlots && attr_slot > 0; ++s) {
      const double x = s < int(nd.attrs.size()) ? nd.attrs[size_t(s)] : 0.0;
      sinusoidal_into(x, attr_slot, cfg.base_frequency,
                      attr_base + size_t(s) * size_t(attr_slot));
    }
    double* shape_base = attr_base + cfg.attr_sin_dim;
    for (int s = 0; s < EncodingConfig::kShapeSlots && shape_slot > 0; ++s) {
      const double x = s < int(nd.shape.size()) ? double(nd.shape[size_t(s)]) : 0.0;
      sinusoidal_into(x, shape_slot, cfg.base_frequency,
                      shape_base + size_t(s) * size_t(shape_slot));
    }
  }
  return z;
}

}  // namespace nnf
