#include "nnf/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "nnf/error.hpp"
#include "nnf/rng.hpp"

#include "json.hpp"

namespace nnf {

using nlohmann::json;

FfnVariant ffn_variant_from_string(const std::string& name) {
  if (name == "BgiDefault") return FfnVariant::BgiDefault;
  if (name == "FwdOnlySplit") return FfnVariant::FwdOnlySplit;
  if (name == "BwdOnlySplit") return FfnVariant::BwdOnlySplit;
  if (name == "FourSplit") return FfnVariant::FourSplit;
  if (name == "SymmetricLaplacian") return FfnVariant::SymmetricLaplacian;
  if (name == "MultiplyCombine") return FfnVariant::MultiplyCombine;
  if (name == "PlainFfn") return FfnVariant::PlainFfn;
  raise(ErrorCode::UnknownVariant, "ffn variant '" + name + "'");
}

std::string to_string(FfnVariant variant) {
  switch (variant) {
    case FfnVariant::BgiDefault: return "BgiDefault";
    case FfnVariant::FwdOnlySplit: return "FwdOnlySplit";
    case FfnVariant::BwdOnlySplit: return "BwdOnlySplit";
    case FfnVariant::FourSplit: return "FourSplit";
    case FfnVariant::SymmetricLaplacian: return "SymmetricLaplacian";
    case FfnVariant::MultiplyCombine: return "MultiplyCombine";
    case FfnVariant::PlainFfn: return "PlainFfn";
  }
  return "?";
}

Readout readout_from_string(const std::string& name) {
  if (name == "ClassToken") return Readout::ClassToken;
  if (name == "SumNodes") return Readout::SumNodes;
  raise(ErrorCode::UnknownVariant, "readout '" + name + "'");
}

std::string to_string(Readout readout) {
  return readout == Readout::ClassToken ? "ClassToken" : "SumNodes";
}

void ModelConfig::validate() const {
  encoding.validate();
  if (channels < 1 || blocks < 1 || heads < 1 || ffn_expansion < 1)
    raise(ErrorCode::ConfigError, "model dimensions must be positive");
  if (channels % heads != 0)
    raise(ErrorCode::ConfigError, "channels must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0)
    raise(ErrorCode::ConfigError, "dropout must be in [0, 1)");
  const int hidden = ffn_hidden();
  switch (ffn_variant) {
    case FfnVariant::BgiDefault:
    case FfnVariant::SymmetricLaplacian:
    case FfnVariant::MultiplyCombine:
      if (hidden % 2 != 0)
        raise(ErrorCode::ConfigError, "ffn hidden width must split in two");
      break;
    case FfnVariant::FourSplit:
      if (hidden % 4 != 0)
        raise(ErrorCode::ConfigError, "ffn hidden width must split in four");
      break;
    default:
      break;
  }
}

ModelConfig ModelConfig::accuracy_preset() {
  ModelConfig cfg;
  cfg.channels = 160;
  cfg.blocks = 12;
  cfg.dropout = 0.1;
  cfg.readout = Readout::ClassToken;
  cfg.encoding = EncodingConfig::accuracy_preset();
  return cfg;
}

ModelConfig ModelConfig::latency_preset() {
  ModelConfig cfg;
  cfg.channels = 512;
  cfg.blocks = 2;
  cfg.dropout = 0.05;
  cfg.readout = Readout::SumNodes;
  cfg.encoding = EncodingConfig::latency_preset();
  return cfg;
}

std::string ModelConfig::to_json() const {
  json j;
  j["channels"] = channels;
  j["blocks"] = blocks;
  j["heads"] = heads;
  j["ffn_expansion"] = ffn_expansion;
  j["dropout"] = dropout;
  j["mask_variant"] = to_string(mask_variant);
  j["ffn_variant"] = to_string(ffn_variant);
  j["readout"] = to_string(readout);
  j["encoding"] = {{"op_onehot_dim", encoding.op_onehot_dim},
                   {"attr_sin_dim", encoding.attr_sin_dim},
                   {"shape_sin_dim", encoding.shape_sin_dim},
                   {"base_frequency", encoding.base_frequency}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, std::string("model config: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg.channels = j.at("channels").get<int>();
    cfg.blocks = j.at("blocks").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.ffn_expansion = j.at("ffn_expansion").get<int>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.mask_variant = mask_variant_from_string(j.at("mask_variant"));
    cfg.ffn_variant = ffn_variant_from_string(j.at("ffn_variant"));
    cfg.readout = readout_from_string(j.at("readout"));
    const auto& enc = j.at("encoding");
    cfg.encoding.op_onehot_dim = enc.at("op_onehot_dim").get<int>();
    cfg.encoding.attr_sin_dim = enc.at("attr_sin_dim").get<int>();
    cfg.encoding.shape_sin_dim = enc.at("shape_sin_dim").get<int>();
    cfg.encoding.base_frequency = enc.at("base_frequency").get<double>();
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---- params ----

void Parameter::refresh_mirror() {
  mirror.resize(value.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      mirror[size_t(c) * rows + r] = value[size_t(r) * cols + c];
}

Parameter& Params::add(const std::string& name, int rows, int cols,
                       bool no_decay) {
  Parameter p;
  p.name = name;
  p.rows = rows;
  p.cols = cols;
  p.value.assign(size_t(rows) * size_t(cols), 0.0);
  p.grad.assign(size_t(rows) * size_t(cols), 0.0);
  p.no_decay = no_decay;
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter& Params::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end())
    raise(ErrorCode::ConfigError, "unknown parameter '" + name + "'");
  return params_[it->second];
}

const Parameter& Params::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    raise(ErrorCode::ConfigError, "unknown parameter '" + name + "'");
  return params_[it->second];
}

bool Params::has(const std::string& name) const {
  return index_.count(name) != 0;
}

void Params::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void Params::refresh_mirrors() {
  for (auto& p : params_) p.refresh_mirror();
}

size_t Params::total_size() const {
  size_t total = 0;
  for (const auto& p : params_) total += p.size();
  return total;
}

namespace {

int gc_split_count(FfnVariant variant) {
  switch (variant) {
    case FfnVariant::BgiDefault:
    case FfnVariant::SymmetricLaplacian:
    case FfnVariant::MultiplyCombine:
      return 2;
    case FfnVariant::FwdOnlySplit:
    case FfnVariant::BwdOnlySplit:
      return 1;
    case FfnVariant::FourSplit:
      return 4;
    case FfnVariant::PlainFfn:
      return 0;
  }
  return 0;
}

}  // namespace

Params make_params(const ModelConfig& cfg) {
  cfg.validate();
  const int d = cfg.channels;
  const int hd = cfg.head_dim();
  const int hidden = cfg.ffn_hidden();
  Params params;

  params.add("input.w", cfg.encoding.total_dim(), d, false);
  params.add("input.b", 1, d, true);
  params.add("input.ln.gamma", 1, d, true);
  params.add("input.ln.beta", 1, d, true);
  if (cfg.readout == Readout::ClassToken) params.add("cls.token", 1, d, false);

  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string pre = "blk" + std::to_string(b) + ".";
    params.add(pre + "ln1.gamma", 1, d, true);
    params.add(pre + "ln1.beta", 1, d, true);
    for (int h = 0; h < cfg.heads; ++h) {
      const std::string hs = std::to_string(h);
      params.add(pre + "attn.q" + hs, d, hd, false);
      params.add(pre + "attn.k" + hs, d, hd, false);
      params.add(pre + "attn.v" + hs, d, hd, false);
    }
    params.add(pre + "attn.out", d, d, false);
    params.add(pre + "ln2.gamma", 1, d, true);
    params.add(pre + "ln2.beta", 1, d, true);
    params.add(pre + "ffn.w1", d, hidden, false);
    params.add(pre + "ffn.b1", 1, hidden, true);
    const int splits = gc_split_count(cfg.ffn_variant);
    for (int s = 0; s < splits; ++s)
      params.add(pre + "ffn.gc" + std::to_string(s), d, hidden / splits, false);
    params.add(pre + "ffn.w2", hidden, d, false);
    params.add(pre + "ffn.b2", 1, d, true);
  }

  if (cfg.readout == Readout::ClassToken) {
    params.add("head.w", d, 1, false);
    params.add("head.b", 1, 1, true);
  } else {
    params.add("head.w1", d, d, false);
    params.add("head.b1", 1, d, true);
    params.add("head.w2", d, 1, false);
    params.add("head.b2", 1, 1, true);
  }
  return params;
}

Params init_params(const ModelConfig& cfg, uint64_t seed) {
  Params params = make_params(cfg);
  Rng rng(substream_seed(seed, "init"));
  constexpr double kSigma = 0.02;
  for (auto& p : params.all()) {
    if (p.name.ends_with("gamma")) {
      std::fill(p.value.begin(), p.value.end(), 1.0);
    } else if (p.no_decay) {
      // biases and LN beta start at zero
    } else {
      for (auto& v : p.value) v = rng.truncated_normal(kSigma);
    }
  }
  return params;
}

// ---- graph cache ----

namespace {

// Dense f64 copy of a boolean operator, embedded in rows x rows with the
// class-token row/column (if any) left zero.
std::vector<double> densify(const BoolMatrix& m, int rows) {
  std::vector<double> out(size_t(rows) * size_t(rows), 0.0);
  for (int i = 0; i < m.n(); ++i)
    for (int j = 0; j < m.n(); ++j)
      if (m.at(i, j)) out[size_t(i) * rows + j] = 1.0;
  return out;
}

std::vector<double> sym_laplacian_operator(const BoolMatrix& adj, int rows) {
  const int n = adj.n();
  std::vector<double> degree(size_t(n), 0.0);
  std::vector<double> sym(size_t(n) * size_t(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (adj.at(i, j) || adj.at(j, i)) {
        sym[size_t(i) * n + j] = 1.0;
        degree[size_t(i)] += 1.0;
      }
  std::vector<double> out(size_t(rows) * size_t(rows), 0.0);
  for (int i = 0; i < n; ++i) {
    if (degree[size_t(i)] == 0.0) continue;
    for (int j = 0; j < n; ++j) {
      if (sym[size_t(i) * n + j] == 0.0 || degree[size_t(j)] == 0.0) continue;
      out[size_t(i) * rows + j] =
          1.0 / std::sqrt(degree[size_t(i)] * degree[size_t(j)]);
    }
  }
  return out;
}

std::vector<std::vector<double>> build_agg_ops(const BoolMatrix& adj,
                                               FfnVariant variant, int rows) {
  const BoolMatrix adj_t = adj.transposed();
  switch (variant) {
    case FfnVariant::BgiDefault:
    case FfnVariant::MultiplyCombine:
      return {densify(adj, rows), densify(adj_t, rows)};
    case FfnVariant::FwdOnlySplit:
      return {densify(adj, rows)};
    case FfnVariant::BwdOnlySplit:
      return {densify(adj_t, rows)};
    case FfnVariant::FourSplit:
      // boolean sibling products, same algebra as the attention masks
      return {densify(adj, rows), densify(adj_t, rows),
              densify(adj_t.bool_product(adj), rows),
              densify(adj.bool_product(adj_t), rows)};
    case FfnVariant::SymmetricLaplacian: {
      auto s = sym_laplacian_operator(adj, rows);
      return {s, s};
    }
    case FfnVariant::PlainFfn:
      return {};
  }
  return {};
}

BoolMatrix augment_mask_with_token(const BoolMatrix& mask) {
  const int n = mask.n();
  BoolMatrix out(n + 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.set(i, j, mask.at(i, j));
  for (int i = 0; i <= n; ++i) {
    out.set(i, n, true);  // token attends and is attended globally
    out.set(n, i, true);
  }
  return out;
}

}  // namespace

GraphCache build_graph_cache(const Dag& dag, const ModelConfig& cfg) {
  cfg.validate();
  dag_validate(dag);
  GraphCache cache;
  cache.n = dag.n;
  const bool token = cfg.readout == Readout::ClassToken;
  cache.rows = dag.n + (token ? 1 : 0);
  cache.z = encode_graph(dag, cfg.encoding);

  MaskSet mask_set = build_mask_set(dag, cfg.mask_variant);
  if (int(mask_set.masks.size()) != cfg.heads)
    raise(ErrorCode::ShapeMismatch,
          "mask set provides " + std::to_string(mask_set.masks.size()) +
              " masks for " + std::to_string(cfg.heads) + " heads");
  for (auto& m : mask_set.masks)
    cache.masks.push_back(token ? augment_mask_with_token(m) : m);

  cache.agg_ops = build_agg_ops(dag.adj, cfg.ffn_variant, cache.rows);
  return cache;
}

// ---- forward ----

namespace {

struct DropSeq {
  uint64_t base = 0;
  uint64_t counter = 0;
  uint64_t next() {
    uint64_t x = base + 0x9e3779b97f4a7c15ULL * (++counter);
    return Rng::splitmix64(x);
  }
};

ad::Tensor leaf_of(ad::Tape& tape, Params& params, const std::string& name) {
  return tape.leaf(params.get(name).ref());
}

ad::Tensor asma_build(ad::Tape& tape, ad::Tensor x,
                      const std::vector<BoolMatrix>& masks, Params& params,
                      const ModelConfig& cfg, int block, bool train,
                      DropSeq& drop) {
  const std::string pre = "blk" + std::to_string(block) + ".attn.";
  const double scale = std::sqrt(double(cfg.head_dim()));
  std::vector<ad::Tensor> heads;
  heads.reserve(size_t(cfg.heads));
  for (int h = 0; h < cfg.heads; ++h) {
    const std::string hs = std::to_string(h);
    ad::Tensor q = tape.matmul(x, leaf_of(tape, params, pre + "q" + hs));
    ad::Tensor k = tape.matmul(x, leaf_of(tape, params, pre + "k" + hs));
    ad::Tensor v = tape.matmul(x, leaf_of(tape, params, pre + "v" + hs));
    ad::Tensor logits = tape.matmul_nt(q, k);
    ad::Tensor attn = tape.softmax_rows_masked(
        logits, masks[size_t(h)].data(), scale);
    attn = tape.dropout(attn, cfg.dropout, train, drop.next());
    heads.push_back(tape.matmul(attn, v));
  }
  ad::Tensor cat = heads[0];
  for (size_t h = 1; h < heads.size(); ++h)
    cat = tape.concat_cols(cat, heads[h]);
  return tape.matmul(cat, leaf_of(tape, params, pre + "out"));
}

ad::Tensor bgiffn_build(ad::Tape& tape, ad::Tensor x,
                        const std::vector<std::vector<double>>& agg_ops,
                        Params& params, const ModelConfig& cfg,
                        FfnVariant variant, int block) {
  const std::string pre = "blk" + std::to_string(block) + ".ffn.";
  const int rows = x.rows();
  ad::Tensor base = tape.add_rowvec(tape.matmul(x, leaf_of(tape, params, pre + "w1")),
                                    leaf_of(tape, params, pre + "b1"));
  ad::Tensor combined = base;
  if (variant != FfnVariant::PlainFfn) {
    ad::Tensor hg;
    for (size_t s = 0; s < agg_ops.size(); ++s) {
      ad::Tensor op = tape.constant(agg_ops[s].data(),
                                    ad::Shape::mat(rows, rows));
      ad::Tensor part = tape.matmul(
          tape.matmul(op, x),
          leaf_of(tape, params, pre + "gc" + std::to_string(s)));
      hg = s == 0 ? part : tape.concat_cols(hg, part);
    }
    combined = variant == FfnVariant::MultiplyCombine ? tape.hadamard(base, hg)
                                                      : tape.add(base, hg);
  }
  ad::Tensor act = tape.relu(combined);
  return tape.add_rowvec(tape.matmul(act, leaf_of(tape, params, pre + "w2")),
                         leaf_of(tape, params, pre + "b2"));
}

ad::Tensor model_trunk(ad::Tape& tape, const GraphCache& cache, Params& params,
                       const ModelConfig& cfg, bool train, DropSeq& drop) {
  ad::Tensor z = tape.constant(
      cache.z.data(), ad::Shape::mat(cache.n, cfg.encoding.total_dim()));
  ad::Tensor h = tape.layer_norm(
      tape.add_rowvec(tape.matmul(z, leaf_of(tape, params, "input.w")),
                      leaf_of(tape, params, "input.b")),
      leaf_of(tape, params, "input.ln.gamma"),
      leaf_of(tape, params, "input.ln.beta"));
  if (cfg.readout == Readout::ClassToken)
    h = tape.concat_rows(h, leaf_of(tape, params, "cls.token"));

  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string pre = "blk" + std::to_string(b) + ".";
    ad::Tensor x1 = tape.layer_norm(h, leaf_of(tape, params, pre + "ln1.gamma"),
                                    leaf_of(tape, params, pre + "ln1.beta"));
    ad::Tensor attn = asma_build(tape, x1, cache.masks, params, cfg, b, train,
                                 drop);
    attn = tape.dropout(attn, cfg.dropout, train, drop.next());
    h = tape.add(h, attn);

    ad::Tensor x2 = tape.layer_norm(h, leaf_of(tape, params, pre + "ln2.gamma"),
                                    leaf_of(tape, params, pre + "ln2.beta"));
    ad::Tensor ffn = bgiffn_build(tape, x2, cache.agg_ops, params, cfg,
                                  cfg.ffn_variant, b);
    ffn = tape.dropout(ffn, cfg.dropout, train, drop.next());
    h = tape.add(h, ffn);
  }
  return h;
}

ad::Tensor readout_build(ad::Tape& tape, ad::Tensor h, Params& params,
                         const ModelConfig& cfg) {
  if (cfg.readout == Readout::ClassToken) {
    ad::Tensor cls = tape.row_select(h, h.rows() - 1);
    return tape.add_rowvec(tape.matmul(cls, leaf_of(tape, params, "head.w")),
                           leaf_of(tape, params, "head.b"));
  }
  ad::Tensor pooled = tape.sum_rows(h);
  ad::Tensor hidden = tape.relu(
      tape.add_rowvec(tape.matmul(pooled, leaf_of(tape, params, "head.w1")),
                      leaf_of(tape, params, "head.b1")));
  return tape.add_rowvec(tape.matmul(hidden, leaf_of(tape, params, "head.w2")),
                         leaf_of(tape, params, "head.b2"));
}

}  // namespace

ad::Tensor model_forward_cached(ad::Tape& tape, const GraphCache& cache,
                                Params& params, const ModelConfig& cfg,
                                bool train, uint64_t dropout_seed) {
  DropSeq drop{dropout_seed, 0};
  ad::Tensor h = model_trunk(tape, cache, params, cfg, train, drop);
  return readout_build(tape, h, params, cfg);
}

double model_forward(const Dag& dag, Params& params, const ModelConfig& cfg,
                     bool train, uint64_t dropout_seed) {
  const GraphCache cache = build_graph_cache(dag, cfg);
  ad::Tape tape;
  const ad::Tensor pred =
      model_forward_cached(tape, cache, params, cfg, train, dropout_seed);
  const double value = pred.scalar_value();
  if (!std::isfinite(value))
    raise(ErrorCode::NonFinite, "model prediction overflowed");
  return value;
}

std::vector<double> model_features(const Dag& dag, Params& params,
                                   const ModelConfig& cfg, bool train,
                                   uint64_t dropout_seed) {
  const GraphCache cache = build_graph_cache(dag, cfg);
  ad::Tape tape;
  DropSeq drop{dropout_seed, 0};
  const ad::Tensor h = model_trunk(tape, cache, params, cfg, train, drop);
  return {h.data(), h.data() + h.numel()};
}

std::vector<double> asma_forward(const std::vector<double>& h, int n,
                                 const MaskSet& masks, Params& params,
                                 const ModelConfig& cfg, bool train,
                                 uint64_t dropout_seed, int block) {
  if (h.size() != size_t(n) * size_t(cfg.channels))
    raise(ErrorCode::ShapeMismatch, "asma_forward input size");
  if (masks.masks.size() != size_t(cfg.heads))
    raise(ErrorCode::ShapeMismatch, "asma_forward mask count vs heads");
  for (const auto& m : masks.masks)
    if (m.n() != n)
      raise(ErrorCode::ShapeMismatch, "asma_forward mask dimension");
  ad::Tape tape;
  DropSeq drop{dropout_seed, 0};
  ad::Tensor x = tape.constant(h.data(), ad::Shape::mat(n, cfg.channels));
  ad::Tensor out =
      asma_build(tape, x, masks.masks, params, cfg, block, train, drop);
  return {out.data(), out.data() + out.numel()};
}

std::vector<double> bgiffn_forward(const std::vector<double>& h, int n,
                                   const BoolMatrix& adj, Params& params,
                                   const ModelConfig& cfg, FfnVariant variant,
                                   bool train, uint64_t dropout_seed,
                                   int block) {
  if (h.size() != size_t(n) * size_t(cfg.channels))
    raise(ErrorCode::ShapeMismatch, "bgiffn_forward input size");
  if (adj.n() != n)
    raise(ErrorCode::ShapeMismatch, "bgiffn_forward adjacency dimension");
  (void)train;
  (void)dropout_seed;
  const auto agg_ops = build_agg_ops(adj, variant, n);
  ad::Tape tape;
  ad::Tensor x = tape.constant(h.data(), ad::Shape::mat(n, cfg.channels));
  ad::Tensor out = bgiffn_build(tape, x, agg_ops, params, cfg, variant, block);
  return {out.data(), out.data() + out.numel()};
}

// ---- checkpoints ----

namespace {

constexpr char kMagic[8] = {'N', 'N', 'F', 'C', 'K', 'P', 'T', '1'};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json manifest = json::array();
  for (const auto& p : ckpt.params.all())
    manifest.push_back({{"name", p.name}, {"rows", p.rows}, {"cols", p.cols}});
  json header;
  header["version"] = 1;
  header["config"] = json::parse(ckpt.cfg.to_json());
  header["manifest"] = manifest;
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoError, "cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  const uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), long(header_text.size()));
  out.write(reinterpret_cast<const char*>(&ckpt.target_lo), sizeof(double));
  out.write(reinterpret_cast<const char*>(&ckpt.target_hi), sizeof(double));
  for (const auto& p : ckpt.params.all())
    out.write(reinterpret_cast<const char*>(p.value.data()),
              long(p.value.size() * sizeof(double)));
  if (!out) raise(ErrorCode::IoError, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    raise(ErrorCode::CheckpointMismatch, "bad magic in " + path);
  uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || header_len > (uint64_t(1) << 30))
    raise(ErrorCode::CheckpointMismatch, "corrupt header length");
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), long(header_len));
  if (!in) raise(ErrorCode::CheckpointMismatch, "truncated header");

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    raise(ErrorCode::CheckpointMismatch, std::string("bad header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    if (header.at("version").get<int>() != 1)
      raise(ErrorCode::CheckpointMismatch, "unsupported checkpoint version");
    ckpt.cfg = ModelConfig::from_json(header.at("config").dump());
  } catch (const json::exception& e) {
    raise(ErrorCode::CheckpointMismatch, std::string("bad header: ") + e.what());
  }
  ckpt.params = make_params(ckpt.cfg);

  const auto& manifest = header.at("manifest");
  if (manifest.size() != ckpt.params.all().size())
    raise(ErrorCode::CheckpointMismatch, "manifest length vs layout");
  for (size_t i = 0; i < manifest.size(); ++i) {
    const auto& entry = manifest.at(i);
    Parameter& p = ckpt.params.all()[i];
    if (entry.at("name").get<std::string>() != p.name ||
        entry.at("rows").get<int>() != p.rows ||
        entry.at("cols").get<int>() != p.cols)
      raise(ErrorCode::CheckpointMismatch,
            "manifest entry " + std::to_string(i) + " does not match layout");
  }

  in.read(reinterpret_cast<char*>(&ckpt.target_lo), sizeof(double));
  in.read(reinterpret_cast<char*>(&ckpt.target_hi), sizeof(double));
  for (auto& p : ckpt.params.all()) {
    in.read(reinterpret_cast<char*>(p.value.data()),
            long(p.value.size() * sizeof(double)));
    if (!in)
      raise(ErrorCode::CheckpointMismatch, "truncated parameter payload");
  }
  char extra;
  if (in.read(&extra, 1))
    raise(ErrorCode::CheckpointMismatch, "trailing bytes after payload");
  return ckpt;
}

}  // namespace nnf
