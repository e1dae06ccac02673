#include "nnf/train.hpp"

#include <algorithm>
#include <cmath>

#include "nnf/error.hpp"
#include "nnf/kernels.hpp"
#include "nnf/metrics.hpp"
#include "nnf/rng.hpp"

#include "json.hpp"

namespace nnf {

using nlohmann::json;

Schedule schedule_from_string(const std::string& name) {
  if (name == "Cosine") return Schedule::Cosine;
  if (name == "LinearDecay") return Schedule::LinearDecay;
  raise(ErrorCode::UnknownVariant, "schedule '" + name + "'");
}

std::string to_string(Schedule schedule) {
  return schedule == Schedule::Cosine ? "Cosine" : "LinearDecay";
}

void TrainConfig::validate() const {
  if (epochs < 0) raise(ErrorCode::ConfigError, "epochs must be >= 0");
  if (warmup_epochs < 0 || (epochs > 0 && warmup_epochs >= epochs))
    raise(ErrorCode::ConfigError, "warmup_epochs must be < epochs");
  if (!(lr_start < lr_peak))
    raise(ErrorCode::ConfigError, "lr_start must be < lr_peak");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    raise(ErrorCode::ConfigError, "betas must be in [0, 1)");
  if (weight_decay < 0.0)
    raise(ErrorCode::ConfigError, "weight_decay must be >= 0");
  if (ema_decay < 0.0 || ema_decay >= 1.0)
    raise(ErrorCode::ConfigError, "ema_decay must be in [0, 1)");
  if (batch_size < 0) raise(ErrorCode::ConfigError, "batch_size must be >= 0");
}

TrainConfig TrainConfig::accuracy_preset() { return TrainConfig{}; }

TrainConfig TrainConfig::latency_preset() {
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.warmup_epochs = 5;
  cfg.schedule = Schedule::LinearDecay;
  return cfg;
}

std::string TrainConfig::to_json() const {
  json j;
  j["epochs"] = epochs;
  j["warmup_epochs"] = warmup_epochs;
  j["lr_start"] = lr_start;
  j["lr_peak"] = lr_peak;
  j["schedule"] = nnf::to_string(schedule);
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["weight_decay"] = weight_decay;
  j["ema_decay"] = ema_decay;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, std::string("train config: ") + e.what());
  }
  TrainConfig cfg;
  try {
    cfg.epochs = j.at("epochs").get<int>();
    cfg.warmup_epochs = j.at("warmup_epochs").get<int>();
    cfg.lr_start = j.at("lr_start").get<double>();
    cfg.lr_peak = j.at("lr_peak").get<double>();
    cfg.schedule = schedule_from_string(j.at("schedule"));
    cfg.beta1 = j.at("beta1").get<double>();
    cfg.beta2 = j.at("beta2").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.ema_decay = j.at("ema_decay").get<double>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.seed = j.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    raise(ErrorCode::ParseError, std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

double lr_at(double epoch, const TrainConfig& cfg) {
  cfg.validate();
  if (epoch < 0.0 || epoch > double(cfg.epochs))
    raise(ErrorCode::OutOfRange,
          "epoch " + std::to_string(epoch) + " outside [0, " +
              std::to_string(cfg.epochs) + "]");
  const double warmup = double(cfg.warmup_epochs);
  if (epoch < warmup)
    return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * (epoch / warmup);
  const double t = (epoch - warmup) / (double(cfg.epochs) - warmup);
  if (cfg.schedule == Schedule::Cosine)
    return cfg.lr_peak * (1.0 + std::cos(M_PI * t)) / 2.0;
  return cfg.lr_peak * (1.0 - t);
}

AdamWState AdamWState::for_params(const Params& params) {
  AdamWState state;
  for (const auto& p : params.all()) {
    state.m.emplace_back(p.size(), 0.0);
    state.v.emplace_back(p.size(), 0.0);
  }
  return state;
}

void adamw_step(Params& params, AdamWState& state, double lr,
                const TrainConfig& cfg) {
  constexpr double kEps = 1e-8;
  if (state.m.size() != params.all().size())
    raise(ErrorCode::ShapeMismatch, "optimizer state vs parameter list");
  ++state.step;
  const double inv_bc1 = 1.0 / (1.0 - std::pow(cfg.beta1, double(state.step)));
  const double inv_bc2 = 1.0 / (1.0 - std::pow(cfg.beta2, double(state.step)));
  for (size_t t = 0; t < params.all().size(); ++t) {
    Parameter& p = params.all()[t];
    if (state.m[t].size() != p.size())
      raise(ErrorCode::ShapeMismatch, "optimizer state for '" + p.name + "'");
    const double wd = p.no_decay ? 0.0 : cfg.weight_decay;
    kern::ops().adamw(p.value.data(), state.m[t].data(), state.v[t].data(),
                      p.grad.data(), p.size(), cfg.beta1, cfg.beta2, inv_bc1,
                      inv_bc2, lr, wd, kEps);
  }
}

void ema_update(Params& ema, const Params& params, double decay) {
  if (ema.all().size() != params.all().size())
    raise(ErrorCode::ShapeMismatch, "EMA parameter list length");
  for (size_t t = 0; t < params.all().size(); ++t) {
    Parameter& e = ema.all()[t];
    const Parameter& p = params.all()[t];
    if (e.size() != p.size())
      raise(ErrorCode::ShapeMismatch, "EMA tensor '" + p.name + "'");
    kern::ops().ema(e.value.data(), p.value.data(), decay, p.size());
  }
}

namespace {

struct Sample {
  GraphCache cache;
  double norm_target = 0.0;
};

std::vector<Sample> prepare(const std::vector<DagRecord>& records,
                            const ModelConfig& cfg, double lo, double hi) {
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<Sample> samples;
  samples.reserve(records.size());
  for (const auto& r : records) {
    Sample s;
    s.cache = build_graph_cache(r.to_dag(), cfg);
    s.norm_target = (r.target - lo) / span;
    samples.push_back(std::move(s));
  }
  return samples;
}

// Kendall tau of eval-mode predictions against targets; 0 when undefined
// (fewer than 2 samples or constant predictions early in training).
double val_kendall(std::vector<Sample>& samples, Params& params,
                   const ModelConfig& cfg, ad::Tape& tape) {
  if (samples.size() < 2) return 0.0;
  std::vector<double> pred, gt;
  pred.reserve(samples.size());
  gt.reserve(samples.size());
  for (auto& s : samples) {
    tape.reset();
    pred.push_back(
        model_forward_cached(tape, s.cache, params, cfg, false, 0)
            .scalar_value());
    gt.push_back(s.norm_target);
  }
  try {
    return kendall_tau(pred, gt);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::AllTied) return 0.0;
    throw;
  }
}

}  // namespace

TrainedModel fit(const ModelConfig& model_cfg,
                 const std::vector<DagRecord>& train_records,
                 const std::vector<DagRecord>& val_records,
                 const TrainConfig& train_cfg) {
  model_cfg.validate();
  train_cfg.validate();
  if (train_records.empty())
    raise(ErrorCode::EmptyDataset, "training split is empty");

  double lo = train_records[0].target, hi = train_records[0].target;
  for (const auto& r : train_records) {
    lo = std::min(lo, r.target);
    hi = std::max(hi, r.target);
  }

  std::vector<Sample> train = prepare(train_records, model_cfg, lo, hi);
  std::vector<Sample> val = prepare(val_records, model_cfg, lo, hi);

  TrainedModel out;
  out.target_lo = lo;
  out.target_hi = hi;
  Params params = init_params(model_cfg, train_cfg.seed);
  params.refresh_mirrors();
  Params ema = params;
  AdamWState opt = AdamWState::for_params(params);

  const int batch_size =
      train_cfg.batch_size > 0
          ? train_cfg.batch_size
          : int(std::min<size_t>(64, train.size()));
  const int num_batches = int((train.size() + size_t(batch_size) - 1) /
                              size_t(batch_size));

  Rng shuffle_rng(substream_seed(train_cfg.seed, "shuffle"));
  const uint64_t dropout_base = substream_seed(train_cfg.seed, "dropout");
  uint64_t dropout_ticket = 0;

  ad::Tape tape;
  out.best_val = -2.0;
  out.best_ema_val = -2.0;
  out.best_params = params;
  out.best_ema_params = ema;

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(train.size(), shuffle_rng);
    double sq_err_sum = 0.0;
    const double epoch_lr = lr_at(double(epoch), train_cfg);

    for (int b = 0; b < num_batches; ++b) {
      const size_t begin = size_t(b) * size_t(batch_size);
      const size_t end = std::min(train.size(), begin + size_t(batch_size));
      const double inv_count = 1.0 / double(end - begin);
      const double lr =
          lr_at(std::min(double(train_cfg.epochs),
                         double(epoch) + double(b) / double(num_batches)),
                train_cfg);

      params.zero_grad();
      for (size_t i = begin; i < end; ++i) {
        Sample& s = train[order[i]];
        tape.reset();
        uint64_t mix = dropout_base + 0x9e3779b97f4a7c15ULL * (++dropout_ticket);
        const ad::Tensor pred = model_forward_cached(
            tape, s.cache, params, model_cfg, true, Rng::splitmix64(mix));
        const double t[1] = {s.norm_target};
        const ad::Tensor loss = tape.scale(tape.mse_loss(pred, t), inv_count);
        tape.backward(loss);
        const double err = pred.scalar_value() - s.norm_target;
        sq_err_sum += err * err;
      }
      if (!std::isfinite(sq_err_sum))
        raise(ErrorCode::DivergedLoss,
              "loss became non-finite in epoch " + std::to_string(epoch) +
                  "; last finite epoch " + std::to_string(epoch - 1));
      adamw_step(params, opt, lr, train_cfg);
      params.refresh_mirrors();
      ema_update(ema, params, train_cfg.ema_decay);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = epoch_lr;
    stats.train_mse = sq_err_sum / double(train.size());
    stats.val_metric = val_kendall(val, params, model_cfg, tape);
    stats.ema_val_metric = val_kendall(val, ema, model_cfg, tape);
    out.history.push_back(stats);

    if (stats.val_metric > out.best_val) {
      out.best_val = stats.val_metric;
      out.best_params = params;
    }
    if (stats.ema_val_metric > out.best_ema_val) {
      out.best_ema_val = stats.ema_val_metric;
      out.best_ema_params = ema;
    }
  }

  out.final_params = std::move(params);
  if (train_cfg.epochs == 0) {
    out.best_params = out.final_params;
    out.best_ema_params = ema;
  }
  return out;
}

std::vector<double> predict(const Checkpoint& ckpt,
                            const std::vector<DagRecord>& records) {
  std::vector<double> out;
  out.reserve(records.size());
  Params params = ckpt.params;  // mutable copy for leaf binding
  const double span =
      ckpt.target_hi > ckpt.target_lo ? ckpt.target_hi - ckpt.target_lo : 1.0;
  ad::Tape tape;
  for (const auto& r : records) {
    const GraphCache cache = build_graph_cache(r.to_dag(), ckpt.cfg);
    tape.reset();
    const double pred =
        model_forward_cached(tape, cache, params, ckpt.cfg, false, 0)
            .scalar_value();
    if (!std::isfinite(pred))
      raise(ErrorCode::NonFinite, "prediction overflowed");
    out.push_back(ckpt.target_lo + pred * span);
  }
  return out;
}

}  // namespace nnf
