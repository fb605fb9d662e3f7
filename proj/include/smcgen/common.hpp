#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

namespace smcgen {

using TokenId = std::int32_t;

inline constexpr TokenId kNoToken = -1;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Base class for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// log(exp(a) + exp(b)) without overflow; handles -inf operands.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

inline double log_sum_exp(std::span<const double> xs) {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  if (std::isinf(hi)) return hi;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

inline double log_mean_exp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  return log_sum_exp(xs) - std::log(static_cast<double>(xs.size()));
}

}  // namespace smcgen
