#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nnf/data.hpp"
#include "nnf/model.hpp"

namespace nnf {

enum class Schedule { Cosine, LinearDecay };

Schedule schedule_from_string(const std::string& name);
std::string to_string(Schedule schedule);

struct TrainConfig {
  int epochs = 3000;
  int warmup_epochs = 300;
  double lr_start = 1e-6;
  double lr_peak = 1e-4;
  Schedule schedule = Schedule::Cosine;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;  // LN parameters and biases are exempt
  double ema_decay = 0.99;
  int batch_size = 0;  // 0 -> min(64, train set size)
  uint64_t seed = 0;

  void validate() const;
  static TrainConfig accuracy_preset();  // 3000 epochs, 300 warmup, cosine
  static TrainConfig latency_preset();   // 50 epochs, 5 warmup, linear decay

  std::string to_json() const;
  static TrainConfig from_json(const std::string& json_text);
};

/// Learning rate at a (possibly fractional) epoch: linear warmup from
/// lr_start to lr_peak, then cosine annealing to zero or linear decay.
double lr_at(double epoch, const TrainConfig& cfg);

/// First/second moments per parameter tensor plus the shared step count.
struct AdamWState {
  std::vector<std::vector<double>> m, v;
  int64_t step = 0;

  static AdamWState for_params(const Params& params);
};

/// Decoupled-weight-decay update from the gradients currently held in
/// params; eps = 1e-8. no_decay parameters skip the decay term.
void adamw_step(Params& params, AdamWState& state, double lr,
                const TrainConfig& cfg);

/// ema <- decay * ema + (1 - decay) * params, elementwise over all tensors.
void ema_update(Params& ema, const Params& params, double decay);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_mse = 0.0;
  double val_metric = 0.0;      // Kendall tau-b of raw params on val
  double ema_val_metric = 0.0;  // same for the EMA weights
};

struct TrainedModel {
  Params final_params;
  Params best_params;      // highest val metric
  Params best_ema_params;  // highest EMA val metric
  double best_val = 0.0;
  double best_ema_val = 0.0;
  double target_lo = 0.0;
  double target_hi = 1.0;
  std::vector<EpochStats> history;
};

/// Full training loop: MSE on min-max-normalized targets, AdamW with
/// warmup + annealing, EMA tracking, deterministic given cfg.seed.
TrainedModel fit(const ModelConfig& model_cfg,
                 const std::vector<DagRecord>& train_records,
                 const std::vector<DagRecord>& val_records,
                 const TrainConfig& train_cfg);

/// Denormalized predictions for a record list.
std::vector<double> predict(const Checkpoint& ckpt,
                            const std::vector<DagRecord>& records);

}  // namespace nnf
