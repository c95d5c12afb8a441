#pragma once

// Small estimation helpers shared by the harness and the test suites.

#include <cmath>
#include <cstddef>

#include "vlf/errors.hpp"

namespace vlf {

inline constexpr double kZ95 = 1.959963984540054;  // two-sided 95% normal quantile

struct PeEstimate {
  double p = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool zero = false;  // no failures observed: hi is the 3/n bound
};

// Binomial error-rate estimate: Wilson score interval at 95%, with the
// rule-of-three upper bound when no failures were observed.
inline PeEstimate estimate_pe(std::size_t failures, std::size_t n) {
  if (n == 0) throw ConfigError("error estimate: zero observations");
  if (failures > n) throw ConfigError("error estimate: failures exceed observations");
  PeEstimate e;
  const double nn = static_cast<double>(n);
  e.p = static_cast<double>(failures) / nn;
  if (failures == 0) {
    e.zero = true;
    e.lo = 0.0;
    e.hi = std::min(1.0, 3.0 / nn);
    return e;
  }
  const double z2 = kZ95 * kZ95;
  const double denom = 1.0 + z2 / nn;
  const double center = (e.p + z2 / (2.0 * nn)) / denom;
  const double half =
      kZ95 * std::sqrt(e.p * (1.0 - e.p) / nn + z2 / (4.0 * nn * nn)) / denom;
  e.lo = std::max(0.0, center - half);
  e.hi = std::min(1.0, center + half);
  return e;
}

// Streaming mean/variance (Welford). Deterministic for a fixed feed order.
struct RunningMean {
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double variance() const {
    return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
  }
  double sd() const { return std::sqrt(variance()); }
  double ci95_half() const {
    return n > 1 ? kZ95 * sd() / std::sqrt(static_cast<double>(n)) : 0.0;
  }
};

}  // namespace vlf
