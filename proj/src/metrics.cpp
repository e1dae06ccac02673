#include "nnf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>

#include "nnf/error.hpp"

#include "json.hpp"

namespace nnf {

namespace {

void check_pair(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size())
    raise(ErrorCode::LengthMismatch,
          std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
  if (pred.size() < 2)
    raise(ErrorCode::LengthMismatch, "need at least 2 samples");
}

// Sum over equal-value runs of len*(len-1)/2.
int64_t tie_pairs(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  int64_t total = 0;
  size_t run = 1;
  for (size_t i = 1; i <= v.size(); ++i) {
    if (i < v.size() && v[i] == v[i - 1]) {
      ++run;
    } else {
      total += int64_t(run) * int64_t(run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

// Merge sort counting strict inversions (a[i] > a[j] for i < j).
int64_t count_inversions(std::vector<double>& v, std::vector<double>& scratch,
                         size_t lo, size_t hi) {
  if (hi - lo < 2) return 0;
  const size_t mid = (lo + hi) / 2;
  int64_t inv = count_inversions(v, scratch, lo, mid) +
                count_inversions(v, scratch, mid, hi);
  size_t i = lo, j = mid, out = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += int64_t(mid - i);
      scratch[out++] = v[j++];
    } else {
      scratch[out++] = v[i++];
    }
  }
  while (i < mid) scratch[out++] = v[i++];
  while (j < hi) scratch[out++] = v[j++];
  std::copy(scratch.begin() + long(lo), scratch.begin() + long(hi),
            v.begin() + long(lo));
  return inv;
}

struct TauCounts {
  int64_t n0 = 0;        // all pairs
  int64_t pred_ties = 0;  // pairs tied in pred (incl. tied in both)
  int64_t gt_ties = 0;    // pairs tied in gt (incl. tied in both)
  int64_t c_minus_d = 0;
};

// Knight's O(n log n) algorithm.
TauCounts tau_counts(std::span<const double> pred, std::span<const double> gt) {
  const size_t n = pred.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (pred[a] != pred[b]) return pred[a] < pred[b];
    return gt[a] < gt[b];
  });

  TauCounts counts;
  counts.n0 = int64_t(n) * int64_t(n - 1) / 2;
  counts.pred_ties = tie_pairs({pred.begin(), pred.end()});
  counts.gt_ties = tie_pairs({gt.begin(), gt.end()});

  int64_t joint_ties = 0;
  {
    size_t run = 1;
    for (size_t i = 1; i <= n; ++i) {
      if (i < n && pred[order[i]] == pred[order[i - 1]] &&
          gt[order[i]] == gt[order[i - 1]]) {
        ++run;
      } else {
        joint_ties += int64_t(run) * int64_t(run - 1) / 2;
        run = 1;
      }
    }
  }

  std::vector<double> gt_sorted_by_pred(n);
  for (size_t i = 0; i < n; ++i) gt_sorted_by_pred[i] = gt[order[i]];
  std::vector<double> scratch(n);
  const int64_t swaps = count_inversions(gt_sorted_by_pred, scratch, 0, n);

  counts.c_minus_d = counts.n0 - counts.pred_ties - counts.gt_ties +
                     joint_ties - 2 * swaps;
  return counts;
}

}  // namespace

double kendall_tau(std::span<const double> pred, std::span<const double> gt) {
  check_pair(pred, gt);
  const TauCounts c = tau_counts(pred, gt);
  const int64_t dp = c.n0 - c.pred_ties;
  const int64_t dg = c.n0 - c.gt_ties;
  if (dp == 0 || dg == 0)
    raise(ErrorCode::AllTied, "tau denominator is zero (a list is constant)");
  return double(c.c_minus_d) / std::sqrt(double(dp) * double(dg));
}

double kendall_tau_a(std::span<const double> pred, std::span<const double> gt) {
  check_pair(pred, gt);
  const TauCounts c = tau_counts(pred, gt);
  return double(c.c_minus_d) / double(c.n0);
}

double mape(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size())
    raise(ErrorCode::LengthMismatch,
          std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
  if (gt.empty()) raise(ErrorCode::LengthMismatch, "empty input");
  double acc = 0.0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (!(gt[i] > 0.0))
      raise(ErrorCode::NonPositiveGroundTruth,
            "gt[" + std::to_string(i) + "] = " + std::to_string(gt[i]));
    acc += std::abs(pred[i] - gt[i]) / gt[i];
  }
  return 100.0 * acc / double(gt.size());
}

double acc_delta(std::span<const double> pred, std::span<const double> gt,
                 double delta) {
  if (pred.size() != gt.size())
    raise(ErrorCode::LengthMismatch,
          std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
  if (gt.empty()) raise(ErrorCode::LengthMismatch, "empty input");
  if (!(delta > 0.0)) raise(ErrorCode::OutOfRange, "delta must be > 0");
  size_t within = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (!(gt[i] > 0.0))
      raise(ErrorCode::NonPositiveGroundTruth,
            "gt[" + std::to_string(i) + "] = " + std::to_string(gt[i]));
    if (std::abs(pred[i] - gt[i]) / gt[i] <= delta) ++within;
  }
  return double(within) / double(gt.size());
}

EvalReport evaluate(std::span<const double> pred, std::span<const double> gt,
                    std::span<const double> deltas) {
  EvalReport report;
  report.n = pred.size();
  report.kendall_tau = kendall_tau(pred, gt);
  report.mape = mape(pred, gt);
  for (double d : deltas) report.acc_delta[d] = acc_delta(pred, gt, d);
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["n"] = n;
  j["kendall_tau"] = kendall_tau;
  j["mape"] = mape;
  for (const auto& [delta, frac] : acc_delta) {
    char key[32];
    std::snprintf(key, sizeof(key), "acc@%.2f", delta);
    j[key] = frac;
  }
  return j.dump();
}

}  // namespace nnf
