#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace cdma::num {

inline double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// log(e^a + e^b)
inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

// log(2 cosh x), no overflow for large |x|.
inline double log_2cosh(double x) {
  const double ax = std::fabs(x);
  return ax + std::log1p(std::exp(-2.0 * ax));
}

inline double log_cosh(double x) { return log_2cosh(x) - std::log(2.0); }

// 1 / (1 + e^{-x})
inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double clamp_abs(double x, double cap) { return std::clamp(x, -cap, cap); }

}  // namespace cdma::num
