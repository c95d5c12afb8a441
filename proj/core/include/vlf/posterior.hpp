#pragma once

// Message-posterior tracking in the log domain, plus the exact one-step
// drift functionals the analysis-side checks are built on.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vlf/channel.hpp"

namespace vlf {

// Entries below this are clamped after renormalization and treated as exact
// zeros by decision logic (the mass involved is ~1e-304).
inline constexpr double kLogPostFloor = -700.0;

struct PosteriorState {
  std::vector<double> lp;  // natural-log posteriors; log_sum_exp(lp) ~ 0
  std::size_t size() const { return lp.size(); }
};

// Message -> channel input used for the next transmission.
struct EncoderMap {
  std::vector<std::uint32_t> x_of;
  std::size_t size() const { return x_of.size(); }
};

PosteriorState init_uniform(std::size_t M);  // requires M >= 2

// One observation step: lp[j] += ln P(y | x_of[j]) - ln p(y), renormalized
// then floored. Returns ln p(y) (the pre-update predictive probability).
// Throws InvariantError if the observation has zero predictive probability.
double bayes_update(PosteriorState& st, const EncoderMap& enc, const Dmc& dmc,
                    std::size_t y);

double entropy(const PosteriorState& st);  // nats, 0 ln 0 = 0

// Index and log-probability of the largest posterior (lowest index on ties).
std::size_t argmax_lp(const PosteriorState& st);

// Log-odds ln(p_j / (1 - p_j)).
double log_odds(const PosteriorState& st, std::size_t j);

// Expected one-step entropy drop E_y[H(cur) - H(next_y)], with y drawn from
// the Bayesian predictive mixture p(y) = sum_j p_j P(y|x_of[j]). Equals the
// conditional mutual information between the message and the next output.
double exact_entropy_drift(const PosteriorState& st, const EncoderMap& enc,
                           const Dmc& dmc);

// Expected one-step drop of ln H under the same mixture law. +inf is
// possible when some observation collapses the posterior to a point mass
// (requires a channel whose rows have unequal supports).
double exact_log_entropy_drift(const PosteriorState& st, const EncoderMap& enc,
                               const Dmc& dmc);

// Same expectation restricted to steps whose drop is >= theta.
double exact_log_entropy_drift_truncated(const PosteriorState& st,
                                         const EncoderMap& enc, const Dmc& dmc,
                                         double theta);

// Expected one-step change of log_odds(j) with y drawn conditionally on
// message j being true: y ~ P(.|x_of[j]).
double exact_z_drift(const PosteriorState& st, const EncoderMap& enc,
                     const Dmc& dmc, std::size_t j);

// As above but with an explicit conditioning input for the y-law.
double exact_z_drift_given(const PosteriorState& st, const EncoderMap& enc,
                           const Dmc& dmc, std::size_t j, std::size_t x_true);

// Expected change of log_odds(j) averaged exactly over the random-partition
// ensemble: every message independently assigned input x with probability
// px[x], y drawn from the row assigned to j. Enumerates the assignments of
// the other messages; throws ConfigError if |X|^(M-1) exceeds 2^22.
double partition_avg_z_drift(const PosteriorState& st, const Dmc& dmc,
                             std::span<const double> px, std::size_t j);

}  // namespace vlf
