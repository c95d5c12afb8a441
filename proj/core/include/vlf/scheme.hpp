#pragma once

// Two-phase variable-length transmission scheme over a DMC with noiseless
// feedback of the channel outputs:
//
//   * partition mode — every step the messages are re-assigned channel
//     inputs at random (message j gets input x with probability px[x],
//     independently); the decoder posterior is updated from the output.
//   * hypothesis mode — entered when some posterior reaches p0; the leading
//     message is assigned input x0 and every other message x0_prime, turning
//     the tail of the transmission into a binary test whose log-odds climb
//     at rate B when the hypothesis is right and fall at rate B_star when it
//     is wrong.
//
// Acceptance fires when the hypothesis log-odds reach z_accept. Two regimes
// cover the two shapes of channel:
//   NoAbort    (B_star > C): a wrong hypothesis loses its lead and the state
//              falls back to partition mode, so no abort branch is needed.
//   AbortRetx  (B_star <= C): the hypothesis is pinned for the attempt; if
//              its log-odds fall to z_abort the attempt is discarded and the
//              whole transmission restarts with fresh randomness.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "vlf/channel.hpp"
#include "vlf/posterior.hpp"
#include "vlf/rng.hpp"

namespace vlf {

enum class Regime { NoAbort, AbortRetx };
enum class ThresholdMode { Theory, Calibrated };

const char* to_string(Regime r);
const char* to_string(ThresholdMode m);

struct SchemeParams {
  Regime regime = Regime::NoAbort;
  std::size_t M = 2;
  double N = 0.0;    // target mean decision time
  double rho = 0.0;  // rate backoff the design point is evaluated at
  // Abort-regime design quantities (L + 3 sqrt(L) = N).
  double L = 0.0;
  double rho_prime = std::numeric_limits<double>::quiet_NaN();
  double p0 = 0.5;       // hypothesis-entry posterior threshold
  double z_enter = 0.0;  // logit(p0)
  double z_accept = 0.0;
  double z_abort = -std::numeric_limits<double>::infinity();
  double const_q = 0.0;
  long long n_max = 0;  // safety horizon on total channel uses
  std::size_t x0 = 0, x0_prime = 1;
  std::vector<double> px;  // partition distribution over channel inputs

  void validate(const Dmc& dmc) const;  // throws ConfigError
};

struct TrialOutcome {
  long long tau = 0;  // total channel uses across attempts
  int attempts = 1;
  bool error = false;
  bool aborted = false;        // safety horizon hit before a decision
  long long phase1_len = 0;    // partition-mode steps of the deciding attempt
  long long phase2_len = 0;    // hypothesis-mode steps of the deciding attempt
  double h_stop = 0.0;         // posterior entropy at the decision time
  // ln(1 - posterior(decoded message)) at the decision time. Kept in the log
  // domain: at large design lengths the residual mass underflows double.
  double log_pe_post = 0.0;
  double z_final = 0.0;        // decoded message's log-odds at decision
  std::uint32_t w_true = 0, w_hat = 0;
};

// Design length L solving L + 3 sqrt(L) = N.
double design_length_from_n(double N);

// Posterior threshold for entering hypothesis mode in the NoAbort regime:
// the smallest u in [1/2, 1] such that the hypothesis-mode log-odds drift of
// the true message, psi(u, v), stays >= C over the admissible v. When the
// boundary psi = C is attained the binding (u, v) solves it to residual
// <= 1e-9 (v_star receives v, binding = true); when psi > C over the whole
// region the constraint never binds and u = 1/2 is returned (binding =
// false). Requires B_star > C; throws InfeasibleError when the boundary
// region is nonempty but unreachable.
double solve_p0(const Dmc& dmc, const ChannelInfo& info,
                double* v_star = nullptr, bool* binding = nullptr);

// Hypothesis-mode drift of the true message's log-odds when a wrong
// hypothesis holds posterior u and the true message posterior v.
double hypothesis_mode_drift(const Dmc& dmc, const ChannelInfo& info,
                             double u, double v);

// Closed-form acceptance threshold (-ln of the target error level) for a
// design point. Throws InfeasibleError when the formula gives a value that
// cannot operate (nonpositive, or below the entry log-odds).
double theory_threshold(const ChannelInfo& info, Regime regime, double N,
                        double rho, double const_q);

// Assembles a full parameter set. In Calibrated mode z_accept is seeded with
// the closed form (or a small placeholder when that is infeasible) and is
// expected to be replaced via calibrate_threshold.
SchemeParams make_scheme_params(const Dmc& dmc, const ChannelInfo& info,
                                std::size_t M, double N, double rho,
                                ThresholdMode mode, double const_q,
                                double n_max_mult = 50.0,
                                std::optional<Regime> force_regime = {});

// One full transmission. Deterministic in (params, run_seed, trial_idx).
TrialOutcome run_trial(const Dmc& dmc, const SchemeParams& params,
                       std::uint64_t run_seed, std::uint64_t trial_idx);

// Step-by-step observer hook for audits: called before each transmission
// with the current posterior, the encoder map about to be used, the
// hypothesis index (or npos in partition mode) and the true message.
struct TrialObserver {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  virtual void on_step(const PosteriorState& st, const EncoderMap& enc,
                       std::size_t hyp_index, std::uint32_t w_true) = 0;
  virtual ~TrialObserver() = default;
};

// Reference implementation of the same trial semantics built directly on the
// generic posterior operations (one full Bayes update per step). Slower;
// used for audits and as a cross-check of run_trial.
TrialOutcome run_trial_instrumented(const Dmc& dmc, const SchemeParams& params,
                                    std::uint64_t run_seed,
                                    std::uint64_t trial_idx,
                                    TrialObserver* observer = nullptr);

// Worker-count resolution: explicit request, else VLF_THREADS, else the
// hardware concurrency (at least 1).
std::size_t resolve_threads(std::size_t requested);

// Runs trials [0, trials) and returns the outcomes ordered by trial index,
// independent of the worker count.
std::vector<TrialOutcome> run_trials(const Dmc& dmc, const SchemeParams& params,
                                     std::uint64_t run_seed, std::size_t trials,
                                     std::size_t threads = 1);

struct CalibrationResult {
  double z_accept = 0.0;
  double mean_tau = 0.0;
  double ci95_half = 0.0;
  int evaluations = 0;
};

// Monotone threshold search: adjusts z_accept until the Monte-Carlo mean of
// tau over `trials` (fixed seed, common random numbers) is within
// tol_rel * target_n of target_n. params.z_accept is updated in place.
CalibrationResult calibrate_threshold(const Dmc& dmc, SchemeParams& params,
                                      double target_n, std::size_t trials,
                                      double tol_rel, std::uint64_t seed,
                                      std::size_t threads = 1);

}  // namespace vlf
