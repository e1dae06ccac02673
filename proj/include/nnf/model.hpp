#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nnf/dag.hpp"
#include "nnf/encoding.hpp"
#include "nnf/tensor.hpp"

namespace nnf {

enum class FfnVariant {
  BgiDefault,
  FwdOnlySplit,
  BwdOnlySplit,
  FourSplit,
  SymmetricLaplacian,
  MultiplyCombine,
  PlainFfn,
};

enum class Readout { ClassToken, SumNodes };

FfnVariant ffn_variant_from_string(const std::string& name);
std::string to_string(FfnVariant variant);
Readout readout_from_string(const std::string& name);
std::string to_string(Readout readout);

struct ModelConfig {
  int channels = 160;
  int blocks = 12;
  int heads = 4;
  int ffn_expansion = 4;
  double dropout = 0.1;
  MaskVariant mask_variant = MaskVariant::AsmaDefault;
  FfnVariant ffn_variant = FfnVariant::BgiDefault;
  Readout readout = Readout::ClassToken;
  EncodingConfig encoding = EncodingConfig::accuracy_preset();

  int head_dim() const { return channels / heads; }
  int ffn_hidden() const { return channels * ffn_expansion; }
  void validate() const;

  /// NAS-style cells: 160 channels, 12 blocks, class-token readout.
  static ModelConfig accuracy_preset();
  /// Whole-network latency: 512 channels, 2 blocks, sum + MLP readout.
  static ModelConfig latency_preset();

  std::string to_json() const;
  static ModelConfig from_json(const std::string& json_text);
};

struct Parameter {
  std::string name;
  int rows = 0, cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> mirror;  // cols x rows transpose; see refresh_mirror
  bool no_decay = false;

  size_t size() const { return value.size(); }

  /// Rebuilds the transposed mirror. The training loop calls this after
  /// every parameter update; while the mirror is in sync, matmul backward
  /// uses it for the faster dX kernel form.
  void refresh_mirror();
  /// Drops the mirror (after direct value edits outside the optimizer).
  void invalidate_mirror() { mirror.clear(); }

  ad::ParamRef ref() {
    return ad::ParamRef{name,
                        value.data(),
                        grad.data(),
                        value.size(),
                        rows,
                        cols,
                        mirror.empty() ? nullptr : mirror.data()};
  }
};

/// Ordered, named parameter store. Layout is a pure function of the
/// config, so two stores from the same config are index-compatible
/// (EMA and optimizer state rely on this).
class Params {
 public:
  Parameter& add(const std::string& name, int rows, int cols, bool no_decay);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool has(const std::string& name) const;

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  void zero_grad();
  void refresh_mirrors();
  size_t total_size() const;

 private:
  std::vector<Parameter> params_;
  std::map<std::string, size_t> index_;
};

/// Parameter layout for cfg with everything zero-initialized.
Params make_params(const ModelConfig& cfg);

/// Weights ~ truncated normal(0, 0.02) clipped at 2 sigma, LN gamma = 1,
/// LN beta and biases = 0; deterministic in seed.
Params init_params(const ModelConfig& cfg, uint64_t seed);

/// Per-graph constants reused across epochs: encoded input rows, one
/// attention mask per head, and the FFN aggregation operators, all
/// augmented with the class-token row when the config uses one.
struct GraphCache {
  int n = 0;     // real nodes
  int rows = 0;  // n + 1 with a class token
  std::vector<double> z;                        // n x enc_width
  std::vector<BoolMatrix> masks;                // per head, rows x rows
  std::vector<std::vector<double>> agg_ops;     // each rows x rows, f64
  double target = 0.0;
};

GraphCache build_graph_cache(const Dag& dag, const ModelConfig& cfg);

/// Forward pass on a caller-owned tape; returns the scalar prediction
/// tensor (model space, before any target denormalization).
ad::Tensor model_forward_cached(ad::Tape& tape, const GraphCache& cache,
                                Params& params, const ModelConfig& cfg,
                                bool train, uint64_t dropout_seed);

/// Convenience single-graph forward; raises NonFinite on overflow.
double model_forward(const Dag& dag, Params& params, const ModelConfig& cfg,
                     bool train = false, uint64_t dropout_seed = 0);

/// Final features H^L, rows x channels (class-token row last if present).
std::vector<double> model_features(const Dag& dag, Params& params,
                                   const ModelConfig& cfg, bool train = false,
                                   uint64_t dropout_seed = 0);

/// One ASMA application (no LN, no residual): per head i,
/// softmax((Q_i K_i^T)/sqrt(h) over mask_i) V_i, heads concatenated and
/// projected by W^O. h is n x channels row-major; block selects whose
/// weights to use.
std::vector<double> asma_forward(const std::vector<double>& h, int n,
                                 const MaskSet& masks, Params& params,
                                 const ModelConfig& cfg, bool train = false,
                                 uint64_t dropout_seed = 0, int block = 0);

/// One BGIFFN application (no LN, no residual) for the given variant on
/// the raw directed adjacency.
std::vector<double> bgiffn_forward(const std::vector<double>& h, int n,
                                   const BoolMatrix& adj, Params& params,
                                   const ModelConfig& cfg, FfnVariant variant,
                                   bool train = false,
                                   uint64_t dropout_seed = 0, int block = 0);

// ---- checkpoints ----

struct Checkpoint {
  ModelConfig cfg;
  Params params;
  double target_lo = 0.0;  // affine target normalization, stored so
  double target_hi = 1.0;  // predictions can be mapped back
};

/// Versioned binary container; f64 payloads round-trip bit-exactly.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace nnf
