#include "nnf/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "nnf/error.hpp"
#include "nnf/rng.hpp"
#include "test_support.hpp"
#include "vanilla_reference.hpp"

namespace nnf {
namespace {

namespace fs = std::filesystem;

ModelConfig tiny_cfg(int channels, int blocks, Readout readout,
                     MaskVariant mask = MaskVariant::AsmaDefault,
                     FfnVariant ffn = FfnVariant::BgiDefault) {
  ModelConfig cfg;
  cfg.channels = channels;
  cfg.blocks = blocks;
  cfg.dropout = 0.0;
  cfg.mask_variant = mask;
  cfg.ffn_variant = ffn;
  cfg.readout = readout;
  cfg.encoding = EncodingConfig::accuracy_preset();
  return cfg;
}

std::vector<double> random_features(Rng& rng, int n, int d) {
  std::vector<double> h(size_t(n) * d);
  for (auto& v : h) v = rng.uniform(-1.0, 1.0);
  return h;
}

TEST(Asma, SingleNodeAttendsItself) {
  // one allowed slot: attention weight is exactly 1, so the output is the
  // node's own value rows through W^O
  const ModelConfig cfg = tiny_cfg(16, 1, Readout::SumNodes);
  Params params = init_params(cfg, 3);
  const Dag dag = Dag::from_edges(1, {});
  const MaskSet masks = build_mask_set(dag, MaskVariant::AsmaDefault);
  Rng rng(8);
  const auto h = random_features(rng, 1, 16);
  const auto out = asma_forward(h, 1, masks, params, cfg);

  std::vector<double> cat(16);
  for (int head = 0; head < 4; ++head) {
    const auto& wv = params.get("blk0.attn.v" + std::to_string(head)).value;
    for (int p = 0; p < 4; ++p) {
      double acc = 0.0;
      for (int c = 0; c < 16; ++c) acc += h[size_t(c)] * wv[size_t(c) * 4 + p];
      cat[size_t(head * 4 + p)] = acc;
    }
  }
  const auto expect =
      test::ref_matmul(cat, params.get("blk0.attn.out").value, 1, 16, 16);
  ASSERT_EQ(out.size(), 16u);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(out[size_t(i)], expect[size_t(i)], 1e-12);
}

TEST(Asma, IsolatedNodesAreIndependent) {
  const ModelConfig cfg = tiny_cfg(16, 1, Readout::SumNodes);
  Params params = init_params(cfg, 5);
  const Dag dag = Dag::from_edges(2, {});  // no edges: masks collapse to I
  const MaskSet masks = build_mask_set(dag, MaskVariant::AsmaDefault);
  Rng rng(9);
  auto h = random_features(rng, 2, 16);
  const auto base = asma_forward(h, 2, masks, params, cfg);
  for (int j = 0; j < 16; ++j) h[size_t(16 + j)] += rng.uniform(0.5, 1.5);
  const auto perturbed = asma_forward(h, 2, masks, params, cfg);
  // row 0 must be bitwise unchanged
  EXPECT_EQ(0, std::memcmp(base.data(), perturbed.data(), 16 * sizeof(double)));
}

TEST(Asma, GlobalMaskEqualsVanillaAttention) {
  const ModelConfig cfg = tiny_cfg(16, 1, Readout::SumNodes,
                                   MaskVariant::GlobalAll);
  Params params = init_params(cfg, 6);
  Rng rng(10);
  const int n = 5;
  const Dag dag = test::random_dag(rng, n, 0.4);
  const MaskSet masks = build_mask_set(dag, MaskVariant::GlobalAll);
  const auto h = random_features(rng, n, 16);
  const auto masked = asma_forward(h, n, masks, params, cfg);

  // unmasked reference attention
  const int d = 16, hd = 4;
  std::vector<double> cat(size_t(n) * d, 0.0);
  for (int head = 0; head < 4; ++head) {
    const std::string hs = std::to_string(head);
    const auto q = test::ref_matmul(h, params.get("blk0.attn.q" + hs).value, n, d, hd);
    const auto k = test::ref_matmul(h, params.get("blk0.attn.k" + hs).value, n, d, hd);
    const auto v = test::ref_matmul(h, params.get("blk0.attn.v" + hs).value, n, d, hd);
    for (int i = 0; i < n; ++i) {
      std::vector<double> logits(static_cast<size_t>(n));
      double mx = -1e300;
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int p = 0; p < hd; ++p)
          s += q[size_t(i) * hd + p] * k[size_t(j) * hd + p];
        logits[size_t(j)] = s / 2.0;  // sqrt(4)
        mx = std::max(mx, logits[size_t(j)]);
      }
      double z = 0.0;
      for (auto& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      for (int p = 0; p < hd; ++p) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
          acc += (logits[size_t(j)] / z) * v[size_t(j) * hd + p];
        cat[size_t(i) * d + head * hd + p] = acc;
      }
    }
  }
  const auto expect = test::ref_matmul(cat, params.get("blk0.attn.out").value, n, d, d);
  for (size_t i = 0; i < expect.size(); ++i)
    EXPECT_NEAR(masked[i], expect[i], 1e-12);
}

TEST(Bgiffn, EdgelessGraphIsPlainFfn) {
  const ModelConfig bgi = tiny_cfg(16, 1, Readout::SumNodes,
                                   MaskVariant::AsmaDefault,
                                   FfnVariant::BgiDefault);
  const ModelConfig plain = tiny_cfg(16, 1, Readout::SumNodes,
                                     MaskVariant::AsmaDefault,
                                     FfnVariant::PlainFfn);
  Params pb = init_params(bgi, 21);
  Params pp = make_params(plain);
  for (auto& p : pp.all()) p.value = pb.get(p.name).value;  // share weights

  Rng rng(22);
  const int n = 4;
  const BoolMatrix no_edges(n);
  const auto h = random_features(rng, n, 16);
  const auto a = bgiffn_forward(h, n, no_edges, pb, bgi, FfnVariant::BgiDefault);
  const auto b = bgiffn_forward(h, n, no_edges, pp, plain, FfnVariant::PlainFfn);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Bgiffn, DiamondSinkGetsNoForwardAggregate) {
  // row 3 of A is zero, so the forward GC contributes nothing at the sink:
  // with the backward split zeroed out, the sink row equals a plain FFN row
  const ModelConfig cfg = tiny_cfg(16, 1, Readout::SumNodes,
                                   MaskVariant::AsmaDefault,
                                   FfnVariant::BgiDefault);
  const ModelConfig plain_cfg = tiny_cfg(16, 1, Readout::SumNodes,
                                         MaskVariant::AsmaDefault,
                                         FfnVariant::PlainFfn);
  Params params = init_params(cfg, 30);
  std::fill(params.get("blk0.ffn.gc1").value.begin(),
            params.get("blk0.ffn.gc1").value.end(), 0.0);
  Params plain = make_params(plain_cfg);
  for (auto& p : plain.all()) p.value = params.get(p.name).value;

  const Dag diamond = Dag::from_edges(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
  Rng rng(31);
  const auto h = random_features(rng, 4, 16);
  const auto bgi =
      bgiffn_forward(h, 4, diamond.adj, params, cfg, FfnVariant::BgiDefault);
  const auto ref = bgiffn_forward(h, 4, diamond.adj, plain, plain_cfg,
                                  FfnVariant::PlainFfn);
  for (int j = 0; j < 16; ++j)
    EXPECT_EQ(bgi[size_t(3 * 16 + j)], ref[size_t(3 * 16 + j)]) << j;
  // non-sink rows do receive forward aggregate
  double diff = 0.0;
  for (int j = 0; j < 16; ++j)
    diff += std::abs(bgi[size_t(j)] - ref[size_t(j)]);
  EXPECT_GT(diff, 0.0);
}

TEST(Bgiffn, DirectedSeparationPathVsFork) {
  // BgiDefault separates a -> b -> c from a -> b <- c; the symmetric
  // Laplacian variant cannot (their symmetrizations are the same graph)
  const Dag path = Dag::from_edges(3, {{0, 1}, {1, 2}});
  const Dag fork = Dag::from_edges(3, {{0, 1}, {2, 1}});
  const ModelConfig bgi_cfg = tiny_cfg(16, 1, Readout::SumNodes,
                                       MaskVariant::AsmaDefault,
                                       FfnVariant::BgiDefault);
  const ModelConfig lap_cfg = tiny_cfg(16, 1, Readout::SumNodes,
                                       MaskVariant::AsmaDefault,
                                       FfnVariant::SymmetricLaplacian);
  int separated = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Params pb = init_params(bgi_cfg, seed);
    Params pl = init_params(lap_cfg, seed);
    Rng rng(seed + 1000);
    std::vector<double> row(16);
    for (auto& v : row) v = rng.uniform(-1.0, 1.0);
    std::vector<double> h;  // identical descriptor -> identical rows
    for (int i = 0; i < 3; ++i) h.insert(h.end(), row.begin(), row.end());

    const auto bp = bgiffn_forward(h, 3, path.adj, pb, bgi_cfg,
                                   FfnVariant::BgiDefault);
    const auto bf = bgiffn_forward(h, 3, fork.adj, pb, bgi_cfg,
                                   FfnVariant::BgiDefault);
    if (test::feature_multiset_distance(bp, bf, 3, 16) > 1e-6) ++separated;

    const auto lp = bgiffn_forward(h, 3, path.adj, pl, lap_cfg,
                                   FfnVariant::SymmetricLaplacian);
    const auto lf = bgiffn_forward(h, 3, fork.adj, pl, lap_cfg,
                                   FfnVariant::SymmetricLaplacian);
    EXPECT_EQ(test::feature_multiset_distance(lp, lf, 3, 16), 0.0)
        << "seed " << seed;
  }
  EXPECT_GE(separated, 19);
}

TEST(Model, VanillaEquivalenceOfGlobalPlainBlock) {
  const ModelConfig cfg = tiny_cfg(32, 1, Readout::SumNodes,
                                   MaskVariant::GlobalAll,
                                   FfnVariant::PlainFfn);
  Params params = init_params(cfg, 77);
  Rng rng(78);
  const Dag dag = test::random_dag(rng, 6, 0.4);

  const auto ours = model_features(dag, params, cfg);

  // independent trunk: input FC + LN, then the vanilla pre-norm block
  std::vector<double> h = test::vanilla_stem(dag, params, cfg);
  h = test::vanilla_block(std::move(h), dag.n, params, cfg, 0);

  ASSERT_EQ(ours.size(), h.size());
  for (size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(ours[i], h[i], 1e-10);
}

TEST(Model, AccuracyPresetShapeWalk) {
  const ModelConfig cfg = [] {
    ModelConfig c = ModelConfig::accuracy_preset();
    c.blocks = 2;  // cheaper than the full 12 for a shape test
    c.dropout = 0.0;
    return c;
  }();
  Params params = init_params(cfg, 1);
  Rng rng(2);
  const Dag cell = test::random_dag(rng, 7, 0.35);
  const auto z = encode_graph(cell, cfg.encoding);
  EXPECT_EQ(z.size(), size_t(7) * 32);
  const auto features = model_features(cell, params, cfg);
  EXPECT_EQ(features.size(), size_t(8) * 160);  // 7 nodes + class token
  const double pred = model_forward(cell, params, cfg);
  EXPECT_TRUE(std::isfinite(pred));
}

TEST(Model, PermutationInvarianceBothReadouts) {
  Rng rng(41);
  for (Readout readout : {Readout::SumNodes, Readout::ClassToken}) {
    const ModelConfig cfg = tiny_cfg(16, 2, readout);
    Params params = init_params(cfg, 42);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 3 + int(rng.next_below(6));
      const Dag dag = test::random_dag(rng, n, 0.4);
      const auto perm = test::random_permutation(rng, n);
      const Dag relabeled = test::permute_dag(dag, perm);
      const double a = model_forward(dag, params, cfg);
      const double b = model_forward(relabeled, params, cfg);
      EXPECT_NEAR(a, b, 1e-9) << to_string(readout) << " trial " << trial;
    }
  }
}

TEST(Model, DeterministicEvalIsBitwise) {
  const ModelConfig cfg = tiny_cfg(16, 2, Readout::SumNodes);
  Params params = init_params(cfg, 50);
  Rng rng(51);
  const Dag dag = test::random_dag(rng, 6, 0.4);
  const double a = model_forward(dag, params, cfg);
  const double b = model_forward(dag, params, cfg);
  EXPECT_EQ(0, std::memcmp(&a, &b, sizeof(double)));
}

TEST(Model, MaskLocalityUnderPerturbation) {
  // nodes with no <= 2-hop connection to the perturbed node through the
  // mask union keep bitwise-identical features after one block
  const ModelConfig cfg = tiny_cfg(16, 1, Readout::SumNodes);
  Params params = init_params(cfg, 60);
  Rng rng(61);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 4 + int(rng.next_below(5));
    Dag dag = test::random_dag(rng, n, 0.25);
    const int u = int(rng.next_below(uint64_t(n)));

    const MaskSet set = build_mask_set(dag, cfg.mask_variant);
    BoolMatrix unionm(n);
    for (const auto& m : set.masks)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (m.at(i, j)) unionm.set(i, j, true);
    std::vector<bool> reach1(size_t(n), false), reach2(size_t(n), false);
    for (int v = 0; v < n; ++v) reach1[size_t(v)] = unionm.at(v, u);
    for (int v = 0; v < n; ++v) {
      reach2[size_t(v)] = reach1[size_t(v)];
      for (int w = 0; w < n; ++w)
        if (reach1[size_t(w)] && unionm.at(v, w)) reach2[size_t(v)] = true;
    }

    const auto base = model_features(dag, params, cfg);
    Dag poked = dag;
    poked.nodes[size_t(u)].op_type =
        (poked.nodes[size_t(u)].op_type + 1) % 6;
    const auto changed = model_features(poked, params, cfg);
    for (int v = 0; v < n; ++v) {
      if (reach2[size_t(v)]) continue;
      EXPECT_EQ(0, std::memcmp(base.data() + size_t(v) * 16,
                               changed.data() + size_t(v) * 16,
                               16 * sizeof(double)))
          << "trial " << trial << " node " << v;
    }
  }
}

TEST(Model, WlBoundedFeatureMultisets) {
  // graphs the directed WL test cannot distinguish (here: relabelings)
  // produce equal feature multisets up to float reordering noise
  const ModelConfig cfg = tiny_cfg(16, 2, Readout::SumNodes);
  Params params = init_params(cfg, 70);
  Rng rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + int(rng.next_below(6));
    const Dag dag = test::random_dag(rng, n, 0.4);
    const Dag relabeled = test::permute_dag(dag, test::random_permutation(rng, n));
    ASSERT_FALSE(wl_distinguishes(dag, relabeled, cfg.blocks));
    const auto fa = model_features(dag, params, cfg);
    const auto fb = model_features(relabeled, params, cfg);
    EXPECT_LT(test::feature_multiset_distance(fa, fb, n, 16), 1e-9);
  }
}

TEST(InitParams, TruncatedNormalStatistics) {
  const ModelConfig cfg = ModelConfig::accuracy_preset();
  const Params params = init_params(cfg, 123);
  double sum = 0.0;
  size_t count = 0;
  for (const auto& p : params.all()) {
    if (p.no_decay || p.name.ends_with("gamma")) continue;
    for (double v : p.value) {
      EXPECT_GE(v, -0.04);
      EXPECT_LE(v, 0.04);
      sum += v;
      ++count;
    }
  }
  EXPECT_GT(count, 100000u);
  EXPECT_NEAR(sum / double(count), 0.0, 0.002);
}

TEST(InitParams, LayerNormAndBiasDefaults) {
  const ModelConfig cfg = tiny_cfg(16, 1, Readout::SumNodes);
  const Params params = init_params(cfg, 5);
  for (double v : params.get("blk0.ln1.gamma").value) EXPECT_EQ(v, 1.0);
  for (double v : params.get("blk0.ln1.beta").value) EXPECT_EQ(v, 0.0);
  for (double v : params.get("blk0.ffn.b1").value) EXPECT_EQ(v, 0.0);
  for (double v : params.get("input.b").value) EXPECT_EQ(v, 0.0);
}

TEST(InitParams, DeterministicInSeed) {
  const ModelConfig cfg = tiny_cfg(32, 2, Readout::ClassToken);
  const Params a = init_params(cfg, 9);
  const Params b = init_params(cfg, 9);
  ASSERT_EQ(a.all().size(), b.all().size());
  for (size_t i = 0; i < a.all().size(); ++i)
    EXPECT_EQ(a.all()[i].value, b.all()[i].value);
  const Params c = init_params(cfg, 10);
  bool any_diff = false;
  for (size_t i = 0; i < a.all().size() && !any_diff; ++i)
    any_diff = a.all()[i].value != c.all()[i].value;
  EXPECT_TRUE(any_diff);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const ModelConfig cfg = tiny_cfg(16, 2, Readout::ClassToken,
                                   MaskVariant::FwdBwd, FfnVariant::FourSplit);
  Checkpoint ckpt;
  ckpt.cfg = cfg;
  ckpt.params = init_params(cfg, 31);
  ckpt.target_lo = 0.12345678901234567;
  ckpt.target_hi = 9.876543210987654e102;
  const std::string path =
      (fs::temp_directory_path() / "nnf_model_test.ckpt").string();
  save_checkpoint(path, ckpt);
  const Checkpoint loaded = load_checkpoint(path);
  EXPECT_EQ(0, std::memcmp(&loaded.target_lo, &ckpt.target_lo, 8));
  EXPECT_EQ(0, std::memcmp(&loaded.target_hi, &ckpt.target_hi, 8));
  ASSERT_EQ(loaded.params.all().size(), ckpt.params.all().size());
  for (size_t i = 0; i < ckpt.params.all().size(); ++i) {
    const auto& a = ckpt.params.all()[i];
    const auto& b = loaded.params.all()[i];
    ASSERT_EQ(a.name, b.name);
    ASSERT_EQ(a.value.size(), b.value.size());
    EXPECT_EQ(0, std::memcmp(a.value.data(), b.value.data(),
                             a.value.size() * sizeof(double)));
  }
  fs::remove(path);
}

TEST(Checkpoint, CorruptedFileIsRejected) {
  const std::string path =
      (fs::temp_directory_path() / "nnf_model_corrupt.ckpt").string();
  std::ofstream(path) << "this is not a checkpoint";
  try {
    load_checkpoint(path);
    FAIL() << "expected CheckpointMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CheckpointMismatch);
  }
  fs::remove(path);
}

TEST(Checkpoint, TruncatedPayloadIsRejected) {
  const ModelConfig cfg = tiny_cfg(16, 1, Readout::SumNodes);
  Checkpoint ckpt;
  ckpt.cfg = cfg;
  ckpt.params = init_params(cfg, 3);
  const std::string path =
      (fs::temp_directory_path() / "nnf_model_trunc.ckpt").string();
  save_checkpoint(path, ckpt);
  fs::resize_file(path, fs::file_size(path) - 64);
  EXPECT_THROW(load_checkpoint(path), Error);
  fs::remove(path);
}

TEST(Model, FullModelGradientCheck) {
  // small end-to-end check; the acceptance suite runs the 5-node d=16 one
  const ModelConfig cfg = tiny_cfg(8, 1, Readout::SumNodes);
  Params params = init_params(cfg, 90);
  Rng rng(91);
  const Dag dag = test::random_dag(rng, 3, 0.5);
  const GraphCache cache = build_graph_cache(dag, cfg);
  const double target[1] = {0.7};

  auto value_fn = [&]() {
    ad::Tape tape;
    const ad::Tensor pred =
        model_forward_cached(tape, cache, params, cfg, false, 0);
    return tape.mse_loss(pred, target).scalar_value();
  };
  auto grad_fn = [&]() {
    params.zero_grad();
    ad::Tape tape;
    const ad::Tensor pred =
        model_forward_cached(tape, cache, params, cfg, false, 0);
    tape.backward(tape.mse_loss(pred, target));
  };
  std::vector<ad::ParamRef> refs;
  for (auto& p : params.all()) refs.push_back(p.ref());
  const auto report =
      ad::finite_diff_check(value_fn, grad_fn, refs, 1e-5, 1e-4);
  EXPECT_TRUE(report.pass) << "max rel err " << report.max_rel_err << " at "
                           << report.worst.param;
}

}  // namespace
}  // namespace nnf
