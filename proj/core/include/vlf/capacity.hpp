#pragma once

// Capacity via alternating maximization with a certified optimality gap:
// every iterate yields a lower bound I(r) and an upper bound max_x D_x, so
// the returned C is within `gap` of the true capacity.

#include <cstddef>
#include <vector>

#include "vlf/channel.hpp"

namespace vlf {

struct CapacityResult {
  double C = 0.0;                  // certified lower bound, within gap of capacity
  std::vector<double> px;          // maximizing input distribution
  double gap = 0.0;                // upper bound minus lower bound at the last iterate
  std::size_t iterations = 0;
  bool converged = false;
};

// Throws ConfigError for invalid tolerances. `lb_trace`, when given, records
// the lower-bound sequence (monotone nondecreasing).
CapacityResult capacity(const Dmc& dmc, double tol = 1e-9,
                        std::size_t max_iter = 200000,
                        std::vector<double>* lb_trace = nullptr);

// Sub-channel on the inputs with px[x] >= thresh. `kept`, when given,
// receives the original indices of the surviving inputs.
Dmc restrict_to_support(const Dmc& dmc, const std::vector<double>& px,
                        double thresh = 1e-9,
                        std::vector<std::size_t>* kept = nullptr);

}  // namespace vlf
