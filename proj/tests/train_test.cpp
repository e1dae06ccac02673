#include "nnf/train.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "nnf/error.hpp"
#include "nnf/rng.hpp"
#include "test_support.hpp"

namespace nnf {
namespace {

TrainConfig short_cfg(int epochs, int warmup, uint64_t seed = 0) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.warmup_epochs = warmup;
  cfg.seed = seed;
  return cfg;
}

ModelConfig tiny_model(int channels = 16, int blocks = 1) {
  ModelConfig cfg;
  cfg.channels = channels;
  cfg.blocks = blocks;
  cfg.dropout = 0.0;
  cfg.readout = Readout::SumNodes;
  cfg.encoding = EncodingConfig::accuracy_preset();
  return cfg;
}

TEST(LrSchedule, PaperEndpoints) {
  const TrainConfig cfg = TrainConfig::accuracy_preset();  // 3000 / 300
  EXPECT_DOUBLE_EQ(lr_at(0.0, cfg), 1e-6);
  EXPECT_DOUBLE_EQ(lr_at(300.0, cfg), 1e-4);
  EXPECT_NEAR(lr_at(1650.0, cfg), 5e-5, 1e-19);  // cosine midpoint
  EXPECT_NEAR(lr_at(3000.0, cfg), 0.0, 1e-19);
}

TEST(LrSchedule, ContinuityAtWarmupBoundary) {
  for (Schedule schedule : {Schedule::Cosine, Schedule::LinearDecay}) {
    TrainConfig cfg = short_cfg(100, 10);
    cfg.schedule = schedule;
    const double before = lr_at(10.0 - 1e-9, cfg);
    const double after = lr_at(10.0 + 1e-9, cfg);
    EXPECT_NEAR(before, cfg.lr_peak, 1e-12);
    EXPECT_NEAR(after, cfg.lr_peak, 1e-12);
  }
}

TEST(LrSchedule, LinearDecayReachesZero) {
  TrainConfig cfg = TrainConfig::latency_preset();  // 50 / 5, linear
  EXPECT_DOUBLE_EQ(lr_at(0.0, cfg), 1e-6);
  EXPECT_DOUBLE_EQ(lr_at(5.0, cfg), 1e-4);
  EXPECT_NEAR(lr_at(27.5, cfg), 5e-5, 1e-19);
  EXPECT_DOUBLE_EQ(lr_at(50.0, cfg), 0.0);
}

TEST(LrSchedule, OutOfRangeThrows) {
  const TrainConfig cfg = short_cfg(100, 10);
  EXPECT_THROW(lr_at(-0.5, cfg), Error);
  try {
    lr_at(100.5, cfg);
    FAIL() << "expected OutOfRange";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfRange);
  }
}

TEST(AdamW, FirstStepWithUnitGradient) {
  const ModelConfig mcfg = tiny_model();
  Params params = make_params(mcfg);
  Parameter& w = params.get("head.w2");  // decayed weight tensor
  std::fill(w.value.begin(), w.value.end(), 0.0);
  std::fill(w.grad.begin(), w.grad.end(), 1.0);
  AdamWState state = AdamWState::for_params(params);
  TrainConfig tcfg = short_cfg(10, 1);
  tcfg.weight_decay = 0.0;
  adamw_step(params, state, 0.1, tcfg);
  // bias-corrected mhat / sqrt(vhat) = 1, so theta = -0.1 up to eps
  for (double v : w.value) EXPECT_NEAR(v, -0.1, 2e-9);
}

TEST(AdamW, ZeroGradientLeavesParamsUnchanged) {
  const ModelConfig mcfg = tiny_model();
  Params params = init_params(mcfg, 4);
  const Params before = params;
  AdamWState state = AdamWState::for_params(params);
  TrainConfig tcfg = short_cfg(10, 1);
  tcfg.weight_decay = 0.0;
  params.zero_grad();
  for (int i = 0; i < 5; ++i) adamw_step(params, state, 0.1, tcfg);
  for (size_t t = 0; t < params.all().size(); ++t)
    EXPECT_EQ(params.all()[t].value, before.all()[t].value);
}

TEST(AdamW, DecayOnlyUpdate) {
  const ModelConfig mcfg = tiny_model();
  Params params = make_params(mcfg);
  Parameter& w = params.get("head.w2");
  std::fill(w.value.begin(), w.value.end(), 1.0);
  AdamWState state = AdamWState::for_params(params);
  TrainConfig tcfg = short_cfg(10, 1);
  tcfg.weight_decay = 0.01;
  params.zero_grad();
  adamw_step(params, state, 0.1, tcfg);
  for (double v : w.value) EXPECT_DOUBLE_EQ(v, 0.999);
}

TEST(AdamW, NoDecaySetIsExemptFromDecay) {
  const ModelConfig mcfg = tiny_model();
  Params params = init_params(mcfg, 7);
  // give every tensor a nonzero value so decay would visibly shrink them
  Parameter& gamma = params.get("blk0.ln1.gamma");
  Parameter& bias = params.get("blk0.ffn.b1");
  std::fill(bias.value.begin(), bias.value.end(), 0.5);
  const auto gamma_before = gamma.value;
  const auto bias_before = bias.value;
  const auto weight_before = params.get("blk0.ffn.w1").value;

  AdamWState state = AdamWState::for_params(params);
  const TrainConfig tcfg = short_cfg(10, 1);  // weight_decay 0.01
  params.zero_grad();
  for (int i = 0; i < 10; ++i) adamw_step(params, state, 0.1, tcfg);

  EXPECT_EQ(0, std::memcmp(gamma.value.data(), gamma_before.data(),
                           gamma_before.size() * sizeof(double)));
  EXPECT_EQ(0, std::memcmp(bias.value.data(), bias_before.data(),
                           bias_before.size() * sizeof(double)));
  // while a weight tensor does decay
  bool changed = false;
  const auto& w_after = params.get("blk0.ffn.w1").value;
  for (size_t i = 0; i < w_after.size(); ++i)
    if (w_after[i] != weight_before[i]) changed = true;
  EXPECT_TRUE(changed);
}

TEST(Ema, ElementwiseExamples) {
  const ModelConfig mcfg = tiny_model();
  Params params = make_params(mcfg);
  Params ema = make_params(mcfg);
  Parameter& p = params.get("head.w2");
  std::fill(p.value.begin(), p.value.end(), 1.0);

  ema_update(ema, params, 0.99);
  for (double v : ema.get("head.w2").value) EXPECT_NEAR(v, 0.01, 1e-15);
  ema_update(ema, params, 0.99);
  for (double v : ema.get("head.w2").value)
    EXPECT_NEAR(v, 0.0199, 1e-15);  // 1 - 0.99^2
}

TEST(Ema, FixedPoint) {
  const ModelConfig mcfg = tiny_model();
  Params params = init_params(mcfg, 12);
  Params ema = params;
  ema_update(ema, params, 0.99);
  for (size_t t = 0; t < params.all().size(); ++t)
    for (size_t i = 0; i < params.all()[t].size(); ++i)
      EXPECT_DOUBLE_EQ(ema.all()[t].value[i], params.all()[t].value[i]);
}

TEST(Ema, GeometricConvergenceToFrozenParams) {
  const ModelConfig mcfg = tiny_model();
  Params params = make_params(mcfg);
  Params ema = make_params(mcfg);
  Parameter& p = params.get("head.w2");
  std::fill(p.value.begin(), p.value.end(), 1.0);
  double prev_gap = 1.0;
  for (int step = 0; step < 20; ++step) {
    ema_update(ema, params, 0.99);
    const double gap = 1.0 - ema.get("head.w2").value[0];
    EXPECT_NEAR(gap, prev_gap * 0.99, 1e-12);
    prev_gap = gap;
  }
}

TEST(Fit, SingleSampleMemorization) {
  SynthConfig scfg;
  scfg.n_graphs = 1;
  scfg.seed = 3;
  const auto records = generate_synthetic(scfg);
  TrainConfig tcfg = short_cfg(200, 20, 5);
  const TrainedModel model = fit(tiny_model(), records, {}, tcfg);
  ASSERT_EQ(model.history.size(), 200u);
  EXPECT_LT(model.history.back().train_mse, 1e-4);
}

TEST(Fit, ZeroEpochsReturnsInitParams) {
  SynthConfig scfg;
  scfg.n_graphs = 4;
  scfg.seed = 8;
  const auto records = generate_synthetic(scfg);
  TrainConfig tcfg = short_cfg(0, 0, 11);
  const TrainedModel model = fit(tiny_model(), records, {}, tcfg);
  EXPECT_TRUE(model.history.empty());
  const Params expect = init_params(tiny_model(), 11);
  ASSERT_EQ(model.final_params.all().size(), expect.all().size());
  for (size_t t = 0; t < expect.all().size(); ++t)
    EXPECT_EQ(model.final_params.all()[t].value, expect.all()[t].value);
}

TEST(Fit, DeterministicHistoryForSameSeed) {
  SynthConfig scfg;
  scfg.n_graphs = 12;
  scfg.seed = 21;
  const auto records = generate_synthetic(scfg);
  const std::vector<DagRecord> train(records.begin(), records.begin() + 8);
  const std::vector<DagRecord> val(records.begin() + 8, records.end());
  ModelConfig mcfg = tiny_model();
  mcfg.dropout = 0.1;  // exercise the dropout stream as well
  TrainConfig tcfg = short_cfg(5, 1, 33);
  tcfg.batch_size = 4;
  const TrainedModel a = fit(mcfg, train, val, tcfg);
  const TrainedModel b = fit(mcfg, train, val, tcfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].train_mse, b.history[i].train_mse);
    EXPECT_EQ(a.history[i].val_metric, b.history[i].val_metric);
    EXPECT_EQ(a.history[i].ema_val_metric, b.history[i].ema_val_metric);
  }
}

TEST(Fit, EmptyTrainSetThrows) {
  try {
    fit(tiny_model(), {}, {}, short_cfg(1, 0));
    FAIL() << "expected EmptyDataset";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
  }
}

TEST(Fit, TargetNormalizationStoredAndInverted) {
  SynthConfig scfg;
  scfg.n_graphs = 10;
  scfg.seed = 44;
  const auto records = generate_synthetic(scfg);
  const TrainedModel model = fit(tiny_model(), records, {}, short_cfg(2, 1, 1));
  double lo = records[0].target, hi = records[0].target;
  for (const auto& r : records) {
    lo = std::min(lo, r.target);
    hi = std::max(hi, r.target);
  }
  EXPECT_DOUBLE_EQ(model.target_lo, lo);
  EXPECT_DOUBLE_EQ(model.target_hi, hi);

  Checkpoint ckpt{tiny_model(), model.final_params, model.target_lo,
                  model.target_hi};
  const auto preds = predict(ckpt, records);
  ASSERT_EQ(preds.size(), records.size());
  for (double p : preds) EXPECT_TRUE(std::isfinite(p));
}

}  // namespace
}  // namespace nnf
