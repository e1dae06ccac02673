#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace nnf {

/// Kendall rank correlation, tau-b (tie-corrected):
/// (C - D) / sqrt((C + D + T_pred) (C + D + T_gt)).
/// O(n log n) merge-sort implementation; AllTied when either list is
/// constant (zero denominator).
double kendall_tau(std::span<const double> pred, std::span<const double> gt);

/// tau-a: (C - D) / (n (n-1) / 2), no tie correction.
double kendall_tau_a(std::span<const double> pred, std::span<const double> gt);

/// 100 * mean(|pred - gt| / gt); every gt entry must be positive.
double mape(std::span<const double> pred, std::span<const double> gt);

/// Fraction of samples with |pred - gt| / gt <= delta (boundary counts).
double acc_delta(std::span<const double> pred, std::span<const double> gt,
                 double delta);

struct EvalReport {
  double kendall_tau = 0.0;
  double mape = 0.0;
  std::map<double, double> acc_delta;  // delta -> fraction
  size_t n = 0;

  std::string to_json() const;
};

EvalReport evaluate(std::span<const double> pred, std::span<const double> gt,
                    std::span<const double> deltas);

}  // namespace nnf
