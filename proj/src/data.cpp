#include "nnf/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "nnf/error.hpp"
#include "nnf/rng.hpp"

#include "json.hpp"

namespace nnf {

using nlohmann::json;

Dag DagRecord::to_dag() const {
  return Dag::from_edges(int(nodes.size()), edges, nodes);
}

bool DagRecord::operator==(const DagRecord& other) const {
  if (target != other.target || edges != other.edges ||
      nodes.size() != other.nodes.size())
    return false;
  for (size_t i = 0; i < nodes.size(); ++i) {
    const auto& a = nodes[i];
    const auto& b = other.nodes[i];
    if (a.op_type != b.op_type || a.attrs != b.attrs || a.shape != b.shape)
      return false;
  }
  return true;
}

namespace {

void validate_record(const DagRecord& record, size_t index) {
  const int n = int(record.nodes.size());
  std::set<std::pair<int, int>> seen;
  for (auto [src, dst] : record.edges) {
    if (src < 0 || src >= n || dst < 0 || dst >= n)
      raise(ErrorCode::ValidationError,
            "record " + std::to_string(index) + ": edge index out of range");
    if (!seen.insert({src, dst}).second)
      raise(ErrorCode::ValidationError,
            "record " + std::to_string(index) + ": duplicate edge (" +
                std::to_string(src) + "," + std::to_string(dst) + ")");
  }
  try {
    dag_validate(record.to_dag());
  } catch (const Error& e) {
    raise(ErrorCode::ValidationError,
          "record " + std::to_string(index) + ": " + e.what());
  }
}

json record_to_json(const DagRecord& record) {
  json nodes = json::array();
  for (const auto& nd : record.nodes) {
    json attrs = json::array();
    for (double a : nd.attrs) attrs.push_back(a);
    json shape = json::array();
    for (int s : nd.shape) shape.push_back(s);
    nodes.push_back({{"op", nd.op_type}, {"attrs", attrs}, {"shape", shape}});
  }
  json edges = json::array();
  for (auto [src, dst] : record.edges) edges.push_back({src, dst});
  return json{{"nodes", nodes}, {"edges", edges}, {"target", record.target}};
}

DagRecord record_from_json(const json& j) {
  DagRecord record;
  for (const auto& jn : j.at("nodes")) {
    NodeDescriptor nd;
    nd.op_type = jn.at("op").get<int>();
    if (jn.contains("attrs"))
      for (const auto& a : jn.at("attrs")) nd.attrs.push_back(a.get<double>());
    if (jn.contains("shape"))
      for (const auto& s : jn.at("shape")) nd.shape.push_back(s.get<int>());
    record.nodes.push_back(std::move(nd));
  }
  for (const auto& je : j.at("edges"))
    record.edges.emplace_back(je.at(0).get<int>(), je.at(1).get<int>());
  record.target = j.at("target").get<double>();
  return record;
}

}  // namespace

std::vector<DagRecord> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path);
  std::vector<DagRecord> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      raise(ErrorCode::ParseError,
            "line " + std::to_string(line_no) + ": " + e.what());
    }
    DagRecord record;
    try {
      record = record_from_json(j);
    } catch (const json::exception& e) {
      raise(ErrorCode::ParseError,
            "line " + std::to_string(line_no) + ": " + e.what());
    }
    validate_record(record, records.size());
    records.push_back(std::move(record));
  }
  return records;
}

void save_jsonl(const std::vector<DagRecord>& records,
                const std::string& path) {
  for (size_t i = 0; i < records.size(); ++i) validate_record(records[i], i);
  std::ofstream out(path);
  if (!out) raise(ErrorCode::IoError, "cannot open " + path + " for writing");
  for (const auto& record : records) out << record_to_json(record).dump() << "\n";
  if (!out) raise(ErrorCode::IoError, "write failed for " + path);
}

std::map<int, double> SynthConfig::default_cost_table() {
  return {{0, 1.0}, {1, 2.0}, {2, 3.0}, {3, 0.5}, {4, 1.5}, {5, 4.0}};
}

void SynthConfig::validate() const {
  if (n_graphs < 0) raise(ErrorCode::ConfigError, "n_graphs must be >= 0");
  if (depth_min < 1 || depth_min > depth_max)
    raise(ErrorCode::ConfigError, "depth range empty");
  if (width_min < 1 || width_min > width_max)
    raise(ErrorCode::ConfigError, "width range empty");
  if (extra_edge_prob < 0.0 || extra_edge_prob > 0.5)
    raise(ErrorCode::ConfigError, "extra_edge_prob outside [0, 0.5]");
  if (op_cost_table.empty())
    raise(ErrorCode::ConfigError, "op_cost_table must not be empty");
  for (const auto& [op, cost] : op_cost_table) {
    if (op < 0 || op >= kMaxOpTypes)
      raise(ErrorCode::ConfigError, "op id outside [0, 32)");
    if (!(cost > 0.0)) raise(ErrorCode::ConfigError, "op costs must be > 0");
  }
  if (parallel_discount < 0.0 || parallel_discount > 1.0)
    raise(ErrorCode::ConfigError, "parallel_discount outside [0, 1]");
}

double critical_path_cost(const Dag& dag, const std::map<int, double>& costs) {
  const auto order = topological_order(dag);
  std::vector<double> best(size_t(dag.n), 0.0);
  double overall = 0.0;
  for (int v : order) {
    double incoming = 0.0;
    for (int u = 0; u < dag.n; ++u)
      if (dag.adj.at(u, v)) incoming = std::max(incoming, best[size_t(u)]);
    const auto it = costs.find(dag.nodes[size_t(v)].op_type);
    if (it == costs.end())
      raise(ErrorCode::ConfigError,
            "no cost for op " + std::to_string(dag.nodes[size_t(v)].op_type));
    best[size_t(v)] = incoming + it->second;
    overall = std::max(overall, best[size_t(v)]);
  }
  return overall;
}

std::vector<DagRecord> generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<int> ops;
  for (const auto& [op, cost] : cfg.op_cost_table) ops.push_back(op);

  std::vector<DagRecord> records;
  records.reserve(size_t(cfg.n_graphs));
  const uint64_t root = substream_seed(cfg.seed, "synth");
  for (int g = 0; g < cfg.n_graphs; ++g) {
    // per-graph stream, so generation order is irrelevant
    uint64_t mix = root + uint64_t(g) * 0x9e3779b97f4a7c15ULL;
    Rng rng(Rng::splitmix64(mix));

    const int depth = int(rng.uniform_int(cfg.depth_min, cfg.depth_max));
    std::vector<int> layer_of;
    std::vector<std::vector<int>> layers(static_cast<size_t>(depth));
    for (int l = 0; l < depth; ++l) {
      const int width = int(rng.uniform_int(cfg.width_min, cfg.width_max));
      for (int w = 0; w < width; ++w) {
        layers[size_t(l)].push_back(int(layer_of.size()));
        layer_of.push_back(l);
      }
    }
    const int n = int(layer_of.size());

    DagRecord record;
    record.nodes.resize(size_t(n));
    for (auto& nd : record.nodes)
      nd.op_type = ops[size_t(rng.next_below(ops.size()))];

    // every non-source node gets >= 1 parent from the previous layer
    for (int l = 1; l < depth; ++l) {
      const auto& prev = layers[size_t(l - 1)];
      for (int v : layers[size_t(l)]) {
        const int parent = prev[size_t(rng.next_below(prev.size()))];
        record.edges.emplace_back(parent, v);
      }
    }
    // extra forward edges between non-adjacent layers
    for (int u = 0; u < n; ++u)
      for (int v = 0; v < n; ++v) {
        if (layer_of[size_t(v)] < layer_of[size_t(u)] + 2) continue;
        if (rng.next_double() < cfg.extra_edge_prob)
          record.edges.emplace_back(u, v);
      }

    const Dag dag = record.to_dag();
    double total = 0.0;
    for (const auto& nd : record.nodes)
      total += cfg.op_cost_table.at(nd.op_type);
    const double crit = critical_path_cost(dag, cfg.op_cost_table);
    record.target = crit + cfg.parallel_discount * (total - crit);
    records.push_back(std::move(record));
  }
  return records;
}

SplitResult split(const std::vector<DagRecord>& records, double train_fraction,
                  double val_fraction, double test_fraction, uint64_t seed) {
  if (records.empty()) raise(ErrorCode::EmptyInput, "no records to split");
  for (double f : {train_fraction, val_fraction, test_fraction})
    if (f < 0.0) raise(ErrorCode::ConfigError, "fractions must be >= 0");
  const double total = train_fraction + val_fraction + test_fraction;
  if (total > 1.0 + 1e-12)
    raise(ErrorCode::ConfigError, "fractions sum to more than 1");

  Rng rng(substream_seed(seed, "split"));
  const auto idx = shuffled_indices(records.size(), rng);

  const double n = double(records.size());
  const size_t end_train = size_t(std::llround(train_fraction * n));
  const size_t end_val =
      size_t(std::llround((train_fraction + val_fraction) * n));
  const size_t end_test = size_t(std::llround(
      (train_fraction + val_fraction + test_fraction) * n));

  SplitResult result;
  for (size_t i = 0; i < end_train; ++i)
    result.train.push_back(records[idx[i]]);
  for (size_t i = end_train; i < end_val; ++i)
    result.val.push_back(records[idx[i]]);
  for (size_t i = end_val; i < end_test && i < records.size(); ++i)
    result.test.push_back(records[idx[i]]);
  return result;
}

}  // namespace nnf
