#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nnf/dag.hpp"

namespace nnf {

/// One serialized sample: a graph plus its scalar target.
struct DagRecord {
  std::vector<NodeDescriptor> nodes;
  std::vector<std::pair<int, int>> edges;
  double target = 0.0;

  Dag to_dag() const;
  bool operator==(const DagRecord& other) const;
};

std::vector<DagRecord> load_jsonl(const std::string& path);
void save_jsonl(const std::vector<DagRecord>& records, const std::string& path);

/// Layered random-DAG generator. Targets follow a critical-path model
/// with a discount for work that can run in parallel:
///   target = C_crit + beta * (C_total - C_crit).
struct SynthConfig {
  int n_graphs = 1000;
  int depth_min = 3, depth_max = 12;
  int width_min = 1, width_max = 4;
  double extra_edge_prob = 0.15;
  std::map<int, double> op_cost_table = default_cost_table();
  double parallel_discount = 0.2;  // beta
  uint64_t seed = 0;

  static std::map<int, double> default_cost_table();
  void validate() const;
};

std::vector<DagRecord> generate_synthetic(const SynthConfig& cfg);

/// Longest root-to-sink path cost (the critical path) by topological DP.
double critical_path_cost(const Dag& dag, const std::map<int, double>& costs);

struct SplitResult {
  std::vector<DagRecord> train, val, test;
};

/// Seeded shuffle then contiguous slices of round(cum_fraction * n).
SplitResult split(const std::vector<DagRecord>& records,
                  double train_fraction, double val_fraction,
                  double test_fraction, uint64_t seed);

}  // namespace nnf
