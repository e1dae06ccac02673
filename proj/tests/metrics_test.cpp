#include "nnf/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "nnf/error.hpp"
#include "nnf/rng.hpp"

namespace nnf {
namespace {

// O(n^2) pair-enumeration oracle for tau-b, the definition the fast
// implementation must reproduce.
double tau_b_bruteforce(const std::vector<double>& pred,
                        const std::vector<double>& gt) {
  int64_t concordant = 0, discordant = 0, tie_pred = 0, tie_gt = 0;
  const size_t n = pred.size();
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      const double dp = pred[i] - pred[j];
      const double dg = gt[i] - gt[j];
      if (dp == 0.0 && dg == 0.0) continue;  // tied in both: counted nowhere
      if (dp == 0.0) {
        ++tie_pred;
      } else if (dg == 0.0) {
        ++tie_gt;
      } else if ((dp > 0) == (dg > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  const double lhs = double(concordant + discordant + tie_pred);
  const double rhs = double(concordant + discordant + tie_gt);
  return double(concordant - discordant) / std::sqrt(lhs * rhs);
}

TEST(KendallTau, MonotoneIsOne) {
  EXPECT_DOUBLE_EQ(kendall_tau({{1.0, 2.0, 3.0}}, {{10.0, 20.0, 30.0}}), 1.0);
}

TEST(KendallTau, ReversedIsMinusOne) {
  EXPECT_DOUBLE_EQ(kendall_tau({{3.0, 2.0, 1.0}}, {{1.0, 2.0, 3.0}}), -1.0);
}

TEST(KendallTau, OneSwapIsOneThird) {
  EXPECT_NEAR(kendall_tau({{1.0, 3.0, 2.0}}, {{1.0, 2.0, 3.0}}), 1.0 / 3.0,
              1e-15);
}

TEST(KendallTau, MatchesBruteForceOn1000RandomVectors) {
  Rng rng(2718);
  for (int trial = 0; trial < 1000; ++trial) {
    const size_t n = 2 + rng.next_below(49);
    std::vector<double> pred(n), gt(n);
    // coarse grid so ties actually happen
    const int levels = 2 + int(rng.next_below(8));
    bool pred_varies = false, gt_varies = false;
    for (size_t i = 0; i < n; ++i) {
      pred[i] = double(rng.next_below(uint64_t(levels)));
      gt[i] = double(rng.next_below(uint64_t(levels)));
      if (pred[i] != pred[0]) pred_varies = true;
      if (gt[i] != gt[0]) gt_varies = true;
    }
    if (!pred_varies) pred[0] += 1.0;
    if (!gt_varies) gt[0] += 1.0;
    ASSERT_NEAR(kendall_tau(pred, gt), tau_b_bruteforce(pred, gt), 1e-12)
        << "trial " << trial;
  }
}

TEST(KendallTau, Symmetry) {
  Rng rng(3);
  std::vector<double> a(20), b(20);
  for (size_t i = 0; i < 20; ++i) {
    a[i] = rng.uniform(0, 5);
    b[i] = rng.uniform(0, 5);
  }
  EXPECT_DOUBLE_EQ(kendall_tau(a, b), kendall_tau(b, a));
}

TEST(KendallTau, InvariantUnderMonotoneTransform) {
  Rng rng(4);
  std::vector<double> pred(30), gt(30), warped(30);
  for (size_t i = 0; i < 30; ++i) {
    pred[i] = rng.uniform(-2, 2);
    gt[i] = rng.uniform(0, 10);
    warped[i] = std::exp(3.0 * pred[i]) + 7.0;  // strictly increasing
  }
  EXPECT_NEAR(kendall_tau(pred, gt), kendall_tau(warped, gt), 1e-12);
}

TEST(KendallTau, AllTiedThrows) {
  try {
    kendall_tau({{1.0, 1.0, 1.0}}, {{1.0, 2.0, 3.0}});
    FAIL() << "expected AllTied";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllTied);
  }
}

TEST(KendallTau, LengthMismatchThrows) {
  try {
    kendall_tau({{1.0, 2.0}}, {{1.0, 2.0, 3.0}});
    FAIL() << "expected LengthMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
  EXPECT_THROW(kendall_tau({{1.0}}, {{1.0}}), Error);
}

TEST(KendallTauA, NoTieCorrection) {
  // one pred tie among 3 pairs: tau_a = (C - D) / 3
  const std::vector<double> pred{1.0, 1.0, 2.0};
  const std::vector<double> gt{1.0, 2.0, 3.0};
  EXPECT_NEAR(kendall_tau_a(pred, gt), 2.0 / 3.0, 1e-15);
}

TEST(Mape, Examples) {
  EXPECT_DOUBLE_EQ(mape({{110.0}}, {{100.0}}), 10.0);
  EXPECT_DOUBLE_EQ(mape({{42.0, 17.0}}, {{42.0, 17.0}}), 0.0);
  EXPECT_DOUBLE_EQ(mape({{90.0, 120.0}}, {{100.0, 100.0}}), 15.0);
}

TEST(Mape, NonPositiveGroundTruthThrows) {
  try {
    mape({{1.0}}, {{0.0}});
    FAIL() << "expected NonPositiveGroundTruth";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveGroundTruth);
  }
}

TEST(AccDelta, Examples) {
  EXPECT_DOUBLE_EQ(acc_delta({{105.0}}, {{100.0}}, 0.10), 1.0);
  EXPECT_DOUBLE_EQ(acc_delta({{111.0}}, {{100.0}}, 0.10), 0.0);
  EXPECT_NEAR(acc_delta({{105.0, 95.0, 130.0}}, {{100.0, 100.0, 100.0}}, 0.10),
              2.0 / 3.0, 1e-15);
}

TEST(AccDelta, BoundaryCountsAsWithin) {
  EXPECT_DOUBLE_EQ(acc_delta({{110.0}}, {{100.0}}, 0.10), 1.0);
}

TEST(AccDelta, MonotoneInDelta) {
  Rng rng(6);
  std::vector<double> pred(50), gt(50);
  for (size_t i = 0; i < 50; ++i) {
    gt[i] = rng.uniform(1.0, 10.0);
    pred[i] = gt[i] * rng.uniform(0.5, 1.5);
  }
  double prev = 0.0;
  for (double d : {0.01, 0.05, 0.1, 0.2, 0.5, 1.0}) {
    const double frac = acc_delta(pred, gt, d);
    EXPECT_GE(frac, prev);
    prev = frac;
  }
  EXPECT_DOUBLE_EQ(acc_delta(pred, gt, 1e18), 1.0);
}

TEST(EvalReport, FlatJson) {
  const EvalReport report =
      evaluate({{1.0, 2.0, 3.0}}, {{1.5, 2.5, 3.5}}, {{0.1, 0.5}});
  const std::string json = report.to_json();
  EXPECT_NE(json.find("\"kendall_tau\""), std::string::npos);
  EXPECT_NE(json.find("\"mape\""), std::string::npos);
  EXPECT_NE(json.find("\"acc@0.10\""), std::string::npos);
  EXPECT_NE(json.find("\"acc@0.50\""), std::string::npos);
  EXPECT_NE(json.find("\"n\":3"), std::string::npos);
}

}  // namespace
}  // namespace nnf
