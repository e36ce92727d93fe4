#pragma once

// Test-only oracles, kept independent of the implementation paths they check.

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace oracles {

struct MomentsOracle {
  double mean, std_dev, skewness, kurtosis_excess;
};

// Extended-precision brute force via raw power sums S_k = sum x^k, converted
// to central moments with the binomial identities. This is a different
// algebraic route than the implementation's centered two-pass accumulation.
// Accurate when |values| are O(1), which matches the ASL domain.
inline MomentsOracle moments_power_sums(std::span<const double> values) {
  const auto n = static_cast<long double>(values.size());
  long double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  for (double v : values) {
    const long double x = v;
    s1 += x;
    s2 += x * x;
    s3 += x * x * x;
    s4 += x * x * x * x;
  }
  const long double mu = s1 / n;
  const long double m2 = s2 / n - mu * mu;
  const long double m3 = s3 / n - 3.0L * mu * s2 / n + 2.0L * mu * mu * mu;
  const long double m4 =
      s4 / n - 4.0L * mu * s3 / n + 6.0L * mu * mu * s2 / n - 3.0L * mu * mu * mu * mu;
  MomentsOracle out{};
  out.mean = static_cast<double>(mu);
  if (m2 <= 0.0L) {
    out.std_dev = out.skewness = out.kurtosis_excess = 0.0;
    return out;
  }
  out.std_dev = static_cast<double>(std::sqrt(m2));
  out.skewness = static_cast<double>(m3 / (m2 * std::sqrt(m2)));
  out.kurtosis_excess = static_cast<double>(m4 / (m2 * m2) - 3.0L);
  return out;
}

// Relative error with an absolute floor of 1 in the denominator: moments of
// O(1)-bounded data can be mathematically zero (e.g. two-point skewness),
// where both computation routes return different sub-1e-15 rounding noise and
// a pure ratio would read 1.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

struct SplitOracle {
  double threshold;
  double gain;
  bool missing_left;
};

// Brute-force enumeration of every candidate split of one column: all
// midpoints between consecutive distinct sorted values, both missing
// directions. Mirrors the documented tie-breaking (smaller threshold, then
// missing-left) by scanning in that order with strict improvement.
inline std::optional<SplitOracle> enumerate_best_split(std::span<const double> g,
                                                       std::span<const double> h,
                                                       std::span<const double> values,
                                                       double l2, double min_child_weight) {
  std::vector<double> present;
  double total_g = 0, total_h = 0, miss_g = 0, miss_h = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    total_g += g[i];
    total_h += h[i];
    if (std::isnan(values[i])) {
      miss_g += g[i];
      miss_h += h[i];
    } else {
      present.push_back(values[i]);
    }
  }
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());

  std::optional<SplitOracle> best;
  double best_gain = 0.0;
  for (std::size_t k = 0; k + 1 < present.size(); ++k) {
    const double threshold = 0.5 * (present[k] + present[k + 1]);
    for (bool missing_left : {true, false}) {
      double gl = missing_left ? miss_g : 0.0;
      double hl = missing_left ? miss_h : 0.0;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isnan(values[i]) && values[i] < threshold) {
          gl += g[i];
          hl += h[i];
        }
      }
      const double gr = total_g - gl;
      const double hr = total_h - hl;
      if (hl < min_child_weight || hr < min_child_weight) continue;
      const double gain = 0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2) -
                                 total_g * total_g / (total_h + l2));
      if (gain > best_gain) {
        best_gain = gain;
        best = SplitOracle{threshold, gain, missing_left};
      }
    }
  }
  return best;
}

// Pearson correlation; NaN entries in x are skipped pairwise.
inline double correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double sx = 0, sy = 0, n = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::isnan(x(i))) continue;
    sx += x(i);
    sy += y(i);
    n += 1;
  }
  if (n < 3) return 0.0;
  const double mx = sx / n, my = sy / n;
  double cxy = 0, cxx = 0, cyy = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::isnan(x(i))) continue;
    cxy += (x(i) - mx) * (y(i) - my);
    cxx += (x(i) - mx) * (x(i) - mx);
    cyy += (y(i) - my) * (y(i) - my);
  }
  if (cxx == 0.0 || cyy == 0.0) return 0.0;
  return cxy / std::sqrt(cxx * cyy);
}

}  // namespace oracles
