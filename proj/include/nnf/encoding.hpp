#pragma once

#include <vector>

#include "nnf/dag.hpp"

namespace nnf {

/// Widths of the per-node input vector. Attribute and shape budgets are
/// split into equal sub-blocks, one per attribute slot (8 attr slots,
/// 4 shape slots), so rows have a fixed width regardless of how many
/// attributes a node carries.
struct EncodingConfig {
  int op_onehot_dim = 32;
  int attr_sin_dim = 80;
  int shape_sin_dim = 80;
  double base_frequency = 10000.0;

  static constexpr int kAttrSlots = 8;
  static constexpr int kShapeSlots = 4;

  int total_dim() const { return op_onehot_dim + attr_sin_dim + shape_sin_dim; }

  /// 192-wide rows: 32 one-hot + 80 attr + 80 shape.
  static EncodingConfig latency_preset() { return EncodingConfig{}; }
  /// 32-wide rows: one-hot only; NAS-style cells carry no attributes.
  static EncodingConfig accuracy_preset() { return EncodingConfig{32, 0, 0, 10000.0}; }

  void validate() const;
};

/// Unit vector of length dim with 1.0 at op_type.
std::vector<double> one_hot(int op_type, int dim);

/// Interleaved sin/cos of x at geometric frequencies:
/// v[2j] = sin(x / base^(2j/dim)), v[2j+1] = cos(x / base^(2j/dim)).
std::vector<double> sinusoidal(double x, int dim, double base);

/// Row-major n x total_dim matrix; row i encodes node i.
std::vector<double> encode_graph(const Dag& dag, const EncodingConfig& cfg);

}  // namespace nnf
