#pragma once

// Log-domain probability helpers. Probabilities live as natural logs;
// -inf encodes exact zero.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace vlf {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ln(1 - e^x) for x <= 0. Two-branch form keeps full precision near both ends.
inline double log1mexp(double x) {
  if (x >= 0.0) return kNegInf;  // p >= 1: complement is zero (or invalid input)
  constexpr double kCut = -0.6931471805599453;  // -ln 2
  if (x > kCut) return std::log(-std::expm1(x));
  return std::log1p(-std::exp(x));
}

// ln(1 + e^x), overflow-safe.
inline double log1pexp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// ln(e^a + e^b), tolerant of -inf.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

inline double log_sum_exp(std::span<const double> v) {
  double hi = kNegInf;
  for (double x : v) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

// Log of the logistic sigmoid: ln p where p = 1/(1+e^{-z}).
inline double log_sigmoid(double z) { return -log1pexp(-z); }

// Log-odds ln(p/(1-p)) from ln p; stable for p near 0 and near 1.
inline double logit_from_lp(double lp) {
  if (lp >= 0.0) return std::numeric_limits<double>::infinity();
  return lp - log1mexp(lp);
}

// Binary entropy in nats; accepts the closed endpoints.
inline double hbin(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

}  // namespace vlf
