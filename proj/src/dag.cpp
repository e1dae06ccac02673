#include "nnf/dag.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "nnf/error.hpp"

namespace nnf {

BoolMatrix BoolMatrix::transposed() const {
  BoolMatrix out(n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      if (at(i, j)) out.set(j, i, true);
  return out;
}

BoolMatrix BoolMatrix::bool_product(const BoolMatrix& other) const {
  BoolMatrix out(n_);
  for (int i = 0; i < n_; ++i)
    for (int k = 0; k < n_; ++k)
      if (at(i, k))
        for (int j = 0; j < n_; ++j)
          if (other.at(k, j)) out.set(i, j, true);
  return out;
}

BoolMatrix BoolMatrix::with_diagonal() const {
  BoolMatrix out = *this;
  for (int i = 0; i < n_; ++i) out.set(i, i, true);
  return out;
}

BoolMatrix BoolMatrix::all_true(int n) {
  BoolMatrix out(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.set(i, j, true);
  return out;
}

Dag Dag::from_edges(int n, const std::vector<std::pair<int, int>>& edges,
                    std::vector<NodeDescriptor> nodes) {
  Dag dag;
  dag.n = n;
  dag.adj = BoolMatrix(n);
  for (auto [src, dst] : edges) {
    if (src < 0 || src >= n || dst < 0 || dst >= n)
      raise(ErrorCode::ShapeMismatch,
            "edge (" + std::to_string(src) + "," + std::to_string(dst) +
                ") out of range for n=" + std::to_string(n));
    dag.adj.set(src, dst, true);
  }
  dag.nodes = std::move(nodes);
  dag.nodes.resize(size_t(n));
  return dag;
}

std::vector<int> Dag::parents_of(int v) const {
  std::vector<int> out;
  for (int u = 0; u < n; ++u)
    if (adj.at(u, v)) out.push_back(u);
  return out;
}

std::vector<int> Dag::children_of(int v) const {
  std::vector<int> out;
  for (int u = 0; u < n; ++u)
    if (adj.at(v, u)) out.push_back(u);
  return out;
}

namespace {

// Kahn's algorithm; returns empty when a cycle blocks completion.
std::vector<int> try_topological_order(const Dag& dag) {
  std::vector<int> indegree(size_t(dag.n), 0);
  for (int i = 0; i < dag.n; ++i)
    for (int j = 0; j < dag.n; ++j)
      if (dag.adj.at(i, j)) ++indegree[size_t(j)];

  std::vector<int> ready;
  for (int v = 0; v < dag.n; ++v)
    if (indegree[size_t(v)] == 0) ready.push_back(v);

  std::vector<int> order;
  order.reserve(size_t(dag.n));
  while (!ready.empty()) {
    // smallest index first keeps the order deterministic
    auto it = std::min_element(ready.begin(), ready.end());
    const int v = *it;
    ready.erase(it);
    order.push_back(v);
    for (int w = 0; w < dag.n; ++w)
      if (dag.adj.at(v, w) && --indegree[size_t(w)] == 0) ready.push_back(w);
  }
  if (int(order.size()) != dag.n) order.clear();
  return order;
}

// One cycle from the graph, for the error message. Iterative DFS with
// white/grey/black coloring.
std::vector<int> find_cycle(const Dag& dag) {
  std::vector<int> state(size_t(dag.n), 0);  // 0 unvisited, 1 on stack, 2 done
  std::vector<int> parent(size_t(dag.n), -1);
  for (int start = 0; start < dag.n; ++start) {
    if (state[size_t(start)] != 0) continue;
    std::vector<std::pair<int, int>> stack{{start, 0}};
    state[size_t(start)] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      int w = next;
      while (w < dag.n && !dag.adj.at(v, w)) ++w;
      if (w == dag.n) {
        state[size_t(v)] = 2;
        stack.pop_back();
        continue;
      }
      next = w + 1;
      if (state[size_t(w)] == 1) {
        std::vector<int> cycle{w};
        for (int u = v; u != w; u = parent[size_t(u)]) cycle.push_back(u);
        std::reverse(cycle.begin() + 1, cycle.end());
        return cycle;
      }
      if (state[size_t(w)] == 0) {
        state[size_t(w)] = 1;
        parent[size_t(w)] = v;
        stack.push_back({w, 0});
      }
    }
  }
  return {};
}

std::string join_ids(const std::vector<int>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(ids[i]);
  }
  return out;
}

}  // namespace

void dag_validate(const Dag& dag) {
  if (dag.n < 1 || dag.n > kMaxNodes)
    raise(ErrorCode::ShapeMismatch,
          "node count " + std::to_string(dag.n) + " outside [1, " +
              std::to_string(kMaxNodes) + "]");
  if (dag.adj.n() != dag.n)
    raise(ErrorCode::ShapeMismatch,
          "adjacency is " + std::to_string(dag.adj.n()) + "x" +
              std::to_string(dag.adj.n()) + " but n=" + std::to_string(dag.n));
  if (int(dag.nodes.size()) != dag.n)
    raise(ErrorCode::ShapeMismatch,
          "descriptor list length " + std::to_string(dag.nodes.size()) +
              " but n=" + std::to_string(dag.n));
  for (int i = 0; i < dag.n; ++i)
    if (dag.adj.at(i, i))
      raise(ErrorCode::SelfLoop, "node " + std::to_string(i));
  for (int i = 0; i < dag.n; ++i) {
    const auto& nd = dag.nodes[size_t(i)];
    if (nd.op_type < 0 || nd.op_type >= kMaxOpTypes)
      raise(ErrorCode::ShapeMismatch,
            "node " + std::to_string(i) + " op_type " +
                std::to_string(nd.op_type) + " outside [0, 32)");
    if (nd.attrs.size() > 8)
      raise(ErrorCode::ShapeMismatch,
            "node " + std::to_string(i) + " has more than 8 attrs");
    if (nd.shape.size() > 4)
      raise(ErrorCode::ShapeMismatch,
            "node " + std::to_string(i) + " shape rank exceeds 4");
    for (double a : nd.attrs)
      if (!std::isfinite(a))
        raise(ErrorCode::NonFinite,
              "node " + std::to_string(i) + " has a non-finite attr");
  }
  if (try_topological_order(dag).empty())
    raise(ErrorCode::CycleDetected, "[" + join_ids(find_cycle(dag)) + "]");
}

std::vector<int> topological_order(const Dag& dag) {
  auto order = try_topological_order(dag);
  if (order.empty())
    raise(ErrorCode::CycleDetected, "[" + join_ids(find_cycle(dag)) + "]");
  return order;
}

SiblingMasks sibling_masks(const Dag& dag) {
  dag_validate(dag);
  const BoolMatrix at = dag.adj.transposed();
  return SiblingMasks{
      .common_child = dag.adj.bool_product(at),
      .common_parent = at.bool_product(dag.adj),
  };
}

MaskSet build_mask_set(const Dag& dag, MaskVariant variant) {
  dag_validate(dag);
  const BoolMatrix fwd = dag.adj.with_diagonal();
  const BoolMatrix bwd = dag.adj.transposed().with_diagonal();

  MaskSet out;
  switch (variant) {
    case MaskVariant::AsmaDefault: {
      const SiblingMasks sib = sibling_masks(dag);
      out.masks = {fwd, bwd, sib.common_parent.with_diagonal(),
                   sib.common_child.with_diagonal()};
      out.labels = {MaskKind::SelfFwd, MaskKind::SelfBwd,
                    MaskKind::SelfCommonParent, MaskKind::SelfCommonChild};
      break;
    }
    case MaskVariant::FwdOnly:
      out.masks = {fwd, fwd, fwd, fwd};
      out.labels = {MaskKind::SelfFwd, MaskKind::SelfFwd, MaskKind::SelfFwd,
                    MaskKind::SelfFwd};
      break;
    case MaskVariant::BwdOnly:
      out.masks = {bwd, bwd, bwd, bwd};
      out.labels = {MaskKind::SelfBwd, MaskKind::SelfBwd, MaskKind::SelfBwd,
                    MaskKind::SelfBwd};
      break;
    case MaskVariant::FwdBwd:
      out.masks = {fwd, fwd, bwd, bwd};
      out.labels = {MaskKind::SelfFwd, MaskKind::SelfFwd, MaskKind::SelfBwd,
                    MaskKind::SelfBwd};
      break;
    case MaskVariant::TwoHop: {
      const BoolMatrix two_fwd = dag.adj.bool_product(dag.adj).with_diagonal();
      const BoolMatrix at = dag.adj.transposed();
      const BoolMatrix two_bwd = at.bool_product(at).with_diagonal();
      out.masks = {fwd, bwd, two_fwd, two_bwd};
      out.labels = {MaskKind::SelfFwd, MaskKind::SelfBwd, MaskKind::TwoHopFwd,
                    MaskKind::TwoHopBwd};
      break;
    }
    case MaskVariant::GlobalAll: {
      const BoolMatrix all = BoolMatrix::all_true(dag.n);
      out.masks = {all, all, all, all};
      out.labels = {MaskKind::Global, MaskKind::Global, MaskKind::Global,
                    MaskKind::Global};
      break;
    }
  }
  return out;
}

MaskVariant mask_variant_from_string(const std::string& name) {
  if (name == "AsmaDefault") return MaskVariant::AsmaDefault;
  if (name == "FwdOnly") return MaskVariant::FwdOnly;
  if (name == "BwdOnly") return MaskVariant::BwdOnly;
  if (name == "FwdBwd") return MaskVariant::FwdBwd;
  if (name == "TwoHop") return MaskVariant::TwoHop;
  if (name == "GlobalAll") return MaskVariant::GlobalAll;
  raise(ErrorCode::UnknownVariant, "mask variant '" + name + "'");
}

std::string to_string(MaskVariant variant) {
  switch (variant) {
    case MaskVariant::AsmaDefault: return "AsmaDefault";
    case MaskVariant::FwdOnly: return "FwdOnly";
    case MaskVariant::BwdOnly: return "BwdOnly";
    case MaskVariant::FwdBwd: return "FwdBwd";
    case MaskVariant::TwoHop: return "TwoHop";
    case MaskVariant::GlobalAll: return "GlobalAll";
  }
  return "?";
}

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::SelfFwd: return "SelfFwd";
    case MaskKind::SelfBwd: return "SelfBwd";
    case MaskKind::SelfCommonChild: return "SelfCommonChild";
    case MaskKind::SelfCommonParent: return "SelfCommonParent";
    case MaskKind::Global: return "Global";
    case MaskKind::TwoHopFwd: return "TwoHopFwd";
    case MaskKind::TwoHopBwd: return "TwoHopBwd";
  }
  return "?";
}

namespace {

using WlSignature = std::tuple<int, std::vector<int>, std::vector<int>>;

// One refinement pass over an adjacency; returns false once stable.
// New ids are ranks of the sorted distinct signatures, which keeps them
// canonical under node relabeling by induction.
bool wl_round(const BoolMatrix& adj, const BoolMatrix& adj_t,
              std::vector<int>& colors) {
  const int n = adj.n();
  std::vector<WlSignature> sigs(static_cast<size_t>(n));
  for (int v = 0; v < n; ++v) {
    std::vector<int> fwd, bwd;
    for (int u = 0; u < n; ++u) {
      if (adj.at(v, u)) fwd.push_back(colors[size_t(u)]);
      if (adj_t.at(v, u)) bwd.push_back(colors[size_t(u)]);
    }
    std::sort(fwd.begin(), fwd.end());
    std::sort(bwd.begin(), bwd.end());
    sigs[size_t(v)] = {colors[size_t(v)], std::move(fwd), std::move(bwd)};
  }
  std::map<WlSignature, int> rank;
  for (const auto& s : sigs) rank.emplace(s, 0);
  int next = 0;
  for (auto& [sig, id] : rank) id = next++;

  bool changed = false;
  for (int v = 0; v < n; ++v) {
    const int c = rank.at(sigs[size_t(v)]);
    if (c != colors[size_t(v)]) changed = true;
    colors[size_t(v)] = c;
  }
  return changed;
}

WlResult wl_refine(const BoolMatrix& adj, const std::vector<NodeDescriptor>& nodes,
                   int iters) {
  const int n = adj.n();
  const BoolMatrix adj_t = adj.transposed();
  WlResult result;
  result.colors.resize(size_t(n));
  for (int v = 0; v < n; ++v) result.colors[size_t(v)] = nodes[size_t(v)].op_type;
  for (int round = 0; round < iters; ++round) {
    result.rounds_run = round + 1;
    if (!wl_round(adj, adj_t, result.colors)) break;
  }
  result.color_multiset = result.colors;
  std::sort(result.color_multiset.begin(), result.color_multiset.end());
  return result;
}

}  // namespace

WlResult wl_refine_directed(const Dag& dag, int iters) {
  dag_validate(dag);
  if (iters < 1) raise(ErrorCode::OutOfRange, "iters must be positive");
  return wl_refine(dag.adj, dag.nodes, iters);
}

WlResult wl_refine_undirected(const Dag& dag, int iters) {
  dag_validate(dag);
  if (iters < 1) raise(ErrorCode::OutOfRange, "iters must be positive");
  BoolMatrix sym = dag.adj;
  for (int i = 0; i < dag.n; ++i)
    for (int j = 0; j < dag.n; ++j)
      if (dag.adj.at(i, j)) sym.set(j, i, true);
  return wl_refine(sym, dag.nodes, iters);
}

bool wl_distinguishes(const Dag& dag1, const Dag& dag2, int iters) {
  dag_validate(dag1);
  dag_validate(dag2);
  if (iters < 1) raise(ErrorCode::OutOfRange, "iters must be positive");
  if (dag1.n != dag2.n) return true;

  // Refine the disjoint union so color ids are shared across both graphs.
  const int n = dag1.n;
  BoolMatrix adj(2 * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (dag1.adj.at(i, j)) adj.set(i, j, true);
      if (dag2.adj.at(i, j)) adj.set(n + i, n + j, true);
    }
  std::vector<NodeDescriptor> nodes = dag1.nodes;
  nodes.insert(nodes.end(), dag2.nodes.begin(), dag2.nodes.end());
  const WlResult joint = wl_refine(adj, nodes, iters);

  std::vector<int> m1(joint.colors.begin(), joint.colors.begin() + n);
  std::vector<int> m2(joint.colors.begin() + n, joint.colors.end());
  std::sort(m1.begin(), m1.end());
  std::sort(m2.begin(), m2.end());
  return m1 != m2;
}

}  // namespace nnf
