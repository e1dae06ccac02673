#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nnf {

constexpr int kMaxNodes = 4096;
constexpr int kMaxOpTypes = 32;

struct NodeDescriptor {
  int op_type = 0;                 // [0, 32)
  std::vector<double> attrs;       // length <= 8
  std::vector<int> shape;          // length <= 4, may be empty
};

/// Square boolean matrix stored row-major as bytes; n up to kMaxNodes.
class BoolMatrix {
 public:
  BoolMatrix() = default;
  explicit BoolMatrix(int n) : n_(n), cells_(size_t(n) * n, 0) {}

  int n() const { return n_; }
  bool at(int i, int j) const { return cells_[size_t(i) * n_ + j] != 0; }
  void set(int i, int j, bool v) { cells_[size_t(i) * n_ + j] = v ? 1 : 0; }
  const uint8_t* data() const { return cells_.data(); }
  const uint8_t* row(int i) const { return cells_.data() + size_t(i) * n_; }

  bool operator==(const BoolMatrix& other) const = default;

  BoolMatrix transposed() const;
  /// Boolean matrix product: out[i][j] = OR_k (this[i][k] AND other[k][j]).
  BoolMatrix bool_product(const BoolMatrix& other) const;
  BoolMatrix with_diagonal() const;
  static BoolMatrix all_true(int n);

 private:
  int n_ = 0;
  std::vector<uint8_t> cells_;
};

/// Directed acyclic graph of operations. adj.at(i, j) means edge i -> j.
struct Dag {
  int n = 0;
  BoolMatrix adj;
  std::vector<NodeDescriptor> nodes;

  static Dag from_edges(int n, const std::vector<std::pair<int, int>>& edges,
                        std::vector<NodeDescriptor> nodes = {});

  std::vector<int> parents_of(int v) const;
  std::vector<int> children_of(int v) const;
};

/// Throws CycleDetected / SelfLoop / ShapeMismatch when invalid.
void dag_validate(const Dag& dag);

/// Topological order of a validated dag (stable: smallest index first
/// among ready nodes).
std::vector<int> topological_order(const Dag& dag);

struct SiblingMasks {
  BoolMatrix common_child;   // boolean A * A^T
  BoolMatrix common_parent;  // boolean A^T * A
};

/// common_child[k][j] <=> some v has edges k->v and j->v;
/// common_parent[k][j] <=> some v has edges v->k and v->j.
SiblingMasks sibling_masks(const Dag& dag);

enum class MaskKind {
  SelfFwd,
  SelfBwd,
  SelfCommonChild,
  SelfCommonParent,
  Global,
  TwoHopFwd,
  TwoHopBwd,
};

enum class MaskVariant {
  AsmaDefault,
  FwdOnly,
  BwdOnly,
  FwdBwd,
  TwoHop,
  GlobalAll,
};

struct MaskSet {
  std::vector<BoolMatrix> masks;   // one per attention head, diagonal always true
  std::vector<MaskKind> labels;
};

MaskSet build_mask_set(const Dag& dag, MaskVariant variant);

MaskVariant mask_variant_from_string(const std::string& name);
std::string to_string(MaskVariant variant);
std::string to_string(MaskKind kind);

struct WlResult {
  std::vector<int> colors;          // canonical per-node color ids
  std::vector<int> color_multiset;  // sorted copy of colors
  int rounds_run = 0;               // rounds until stabilization or iters
};

/// Directed 1-WL refinement: a node's next color is determined by its old
/// color plus the multisets of forward- and backward-neighbor colors.
/// Color ids are canonical (assigned in sorted signature order), so the
/// multiset is invariant under node relabeling.
WlResult wl_refine_directed(const Dag& dag, int iters);

/// Same refinement with symmetrized adjacency; the direction-blind baseline.
WlResult wl_refine_undirected(const Dag& dag, int iters);

/// True iff stabilized color multisets differ (joint refinement over the
/// disjoint union, so colors are comparable across the two graphs).
bool wl_distinguishes(const Dag& dag1, const Dag& dag2, int iters);

}  // namespace nnf
