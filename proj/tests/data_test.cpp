#include "nnf/data.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>

#include "nnf/error.hpp"
#include "nnf/rng.hpp"
#include "test_support.hpp"

namespace nnf {
namespace {

namespace fs = std::filesystem;

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("nnf_data_test_" + name)).string();
}

DagRecord random_record(Rng& rng, int max_n = 8) {
  const int n = 2 + int(rng.next_below(uint64_t(max_n - 1)));
  const Dag dag = test::random_dag(rng, n, 0.4);
  DagRecord record;
  record.nodes = dag.nodes;
  for (int i = 0; i < n; ++i) {
    if (rng.next_double() < 0.5)
      record.nodes[size_t(i)].attrs = {rng.uniform(0, 8), rng.uniform(0, 4)};
    if (rng.next_double() < 0.3)
      record.nodes[size_t(i)].shape = {1, int(rng.next_below(64)) + 1};
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (dag.adj.at(i, j)) record.edges.emplace_back(i, j);
  record.target = rng.uniform(0.001, 100.0);
  return record;
}

// Exhaustive DFS over all paths; the oracle for the topological DP.
double longest_path_bruteforce(const Dag& dag,
                               const std::map<int, double>& costs) {
  double best = 0.0;
  std::function<void(int, double)> dfs = [&](int v, double acc) {
    acc += costs.at(dag.nodes[size_t(v)].op_type);
    best = std::max(best, acc);
    for (int w = 0; w < dag.n; ++w)
      if (dag.adj.at(v, w)) dfs(w, acc);
  };
  for (int v = 0; v < dag.n; ++v) dfs(v, 0.0);
  return best;
}

TEST(Jsonl, RoundTripIsValueExact) {
  Rng rng(11);
  std::vector<DagRecord> records;
  for (int i = 0; i < 100; ++i) records.push_back(random_record(rng));
  const std::string path = temp_path("roundtrip.jsonl");
  save_jsonl(records, path);
  const auto loaded = load_jsonl(path);
  ASSERT_EQ(loaded.size(), records.size());
  for (size_t i = 0; i < records.size(); ++i)
    EXPECT_TRUE(loaded[i] == records[i]) << "record " << i;
  fs::remove(path);
}

TEST(Jsonl, EmptyFileGivesEmptyList) {
  const std::string path = temp_path("empty.jsonl");
  std::ofstream(path).close();
  EXPECT_TRUE(load_jsonl(path).empty());
  fs::remove(path);
}

TEST(Jsonl, CycleEdgesGiveValidationError) {
  const std::string path = temp_path("cycle.jsonl");
  std::ofstream out(path);
  out << R"({"nodes":[{"op":0},{"op":1}],"edges":[[0,1],[1,0]],"target":1.0})"
      << "\n";
  out.close();
  try {
    load_jsonl(path);
    FAIL() << "expected ValidationError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ValidationError);
  }
  fs::remove(path);
}

TEST(Jsonl, DuplicateEdgeGivesValidationError) {
  const std::string path = temp_path("dup.jsonl");
  std::ofstream out(path);
  out << R"({"nodes":[{"op":0},{"op":1}],"edges":[[0,1],[0,1]],"target":1.0})"
      << "\n";
  out.close();
  EXPECT_THROW(load_jsonl(path), Error);
  fs::remove(path);
}

TEST(Jsonl, MalformedLineReportsLineNumber) {
  const std::string path = temp_path("bad.jsonl");
  std::ofstream out(path);
  out << R"({"nodes":[{"op":0}],"edges":[],"target":1.0})" << "\n";
  out << "{not json}\n";
  out.close();
  try {
    load_jsonl(path);
    FAIL() << "expected ParseError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  fs::remove(path);
}

TEST(Synthetic, ChainTargetEqualsCriticalPath) {
  // 3-node chain of unit costs, beta = 0.2: everything is on the path
  const std::map<int, double> costs{{0, 1.0}};
  const Dag chain = Dag::from_edges(3, {{0, 1}, {1, 2}});
  const double crit = critical_path_cost(chain, costs);
  EXPECT_DOUBLE_EQ(crit, 3.0);
  EXPECT_DOUBLE_EQ(crit + 0.2 * (3.0 - crit), 3.0);
}

TEST(Synthetic, DiamondTargetDiscountsParallelWork) {
  const std::map<int, double> costs{{0, 1.0}};
  const Dag diamond = Dag::from_edges(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
  const double crit = critical_path_cost(diamond, costs);
  EXPECT_DOUBLE_EQ(crit, 3.0);
  EXPECT_DOUBLE_EQ(crit + 0.2 * (4.0 - crit), 3.2);
}

TEST(Synthetic, DeterministicAcrossCalls) {
  SynthConfig cfg;
  cfg.n_graphs = 40;
  cfg.seed = 77;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i] == b[i]);
}

TEST(Synthetic, EveryRecordValidates) {
  SynthConfig cfg;
  cfg.n_graphs = 200;
  cfg.seed = 5;
  const auto records = generate_synthetic(cfg);
  ASSERT_EQ(records.size(), 200u);
  for (const auto& r : records) {
    EXPECT_NO_THROW(dag_validate(r.to_dag()));
    EXPECT_GT(r.target, 0.0);
  }
}

TEST(Synthetic, CriticalPathMatchesBruteForce) {
  SynthConfig cfg;
  cfg.n_graphs = 120;
  cfg.depth_min = 2;
  cfg.depth_max = 5;
  cfg.width_min = 1;
  cfg.width_max = 3;
  cfg.seed = 13;
  for (const auto& record : generate_synthetic(cfg)) {
    const Dag dag = record.to_dag();
    if (dag.n > 12) continue;
    EXPECT_NEAR(critical_path_cost(dag, cfg.op_cost_table),
                longest_path_bruteforce(dag, cfg.op_cost_table), 1e-12);
  }
}

// The target must carry topology information beyond the node multiset and
// edge count, otherwise the benchmark would not reward structure learning.
TEST(Synthetic, TargetNotAFunctionOfNodeMultisetAndEdgeCount) {
  SynthConfig cfg;
  cfg.n_graphs = 1000;
  cfg.depth_min = 3;
  cfg.depth_max = 5;
  cfg.width_min = 1;
  cfg.width_max = 2;
  cfg.op_cost_table = {{0, 1.0}, {1, 2.0}, {2, 3.0}};
  cfg.seed = 99;
  const auto records = generate_synthetic(cfg);

  std::map<std::pair<std::vector<int>, size_t>, std::vector<double>> buckets;
  for (const auto& r : records) {
    std::vector<int> ops;
    for (const auto& nd : r.nodes) ops.push_back(nd.op_type);
    std::sort(ops.begin(), ops.end());
    buckets[{ops, r.edges.size()}].push_back(r.target);
  }
  bool found_witness = false;
  for (const auto& [key, targets] : buckets)
    for (size_t i = 1; i < targets.size() && !found_witness; ++i)
      if (std::abs(targets[i] - targets[0]) > 1e-9) found_witness = true;
  EXPECT_TRUE(found_witness)
      << "all targets were determined by (node multiset, edge count)";
}

TEST(Split, SizesAndDeterminism) {
  Rng rng(20);
  std::vector<DagRecord> records;
  for (int i = 0; i < 100; ++i) records.push_back(random_record(rng));
  const SplitResult a = split(records, 0.8, 0.1, 0.1, 4);
  EXPECT_EQ(a.train.size(), 80u);
  EXPECT_EQ(a.val.size(), 10u);
  EXPECT_EQ(a.test.size(), 10u);
  const SplitResult b = split(records, 0.8, 0.1, 0.1, 4);
  for (size_t i = 0; i < a.train.size(); ++i)
    EXPECT_TRUE(a.train[i] == b.train[i]);
}

TEST(Split, DisjointCoverage) {
  Rng rng(21);
  std::vector<DagRecord> records;
  for (int i = 0; i < 50; ++i) {
    DagRecord r = random_record(rng);
    r.target = double(i) + 0.5;  // unique marker
    records.push_back(r);
  }
  const SplitResult s = split(records, 0.6, 0.2, 0.2, 9);
  std::vector<double> seen;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (const auto& r : *part) seen.push_back(r.target);
  std::sort(seen.begin(), seen.end());
  ASSERT_EQ(seen.size(), 50u);
  for (size_t i = 0; i < 50; ++i) EXPECT_EQ(seen[i], double(i) + 0.5);
}

TEST(Split, OverflowingFractionsThrow) {
  Rng rng(22);
  std::vector<DagRecord> records{random_record(rng)};
  EXPECT_THROW(split(records, 1.0, 0.1, 0.0, 1), Error);
}

TEST(Split, EmptyInputThrows) {
  try {
    split({}, 0.5, 0.5, 0.0, 1);
    FAIL() << "expected EmptyInput";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

}  // namespace
}  // namespace nnf
