#pragma once

// Desk-scale checks of the drift / stopping-time machinery behind the
// scheme's length analysis:
//
//   * simulate_stopping — random walks with piecewise drift and bounded
//     steps, measured against closed-form expected-stopping-time bounds.
//   * audit_schedule    — the abort-regime length/error budget evaluated on
//     a grid of design lengths.
//   * converse_roots    — the two roots of x/C = ln(x)/B + b, whose ratio
//     governs converse-side length bounds.
//   * fano_check        — conditional entropy vs error probability sanity
//     inequality on measured campaign statistics.

#include <cstddef>
#include <cstdint>
#include <string>

#include "vlf/channel.hpp"

namespace vlf {

enum class WalkRegime {
  SingleUp,    // drift >= K1 below 0, >= K2 above; stop when xi >= T
  UpThenDown,  // drift K1 up to the first crossing of T0, then -K2; stop at xi <= T
  UpThenUp     // drift K1 up to the first crossing of T0, then K2; stop at xi >= T
};

enum class StepLaw {
  TwoPoint,     // +-K3 with probabilities (1 +- d/K3)/2
  TruncUniform  // uniform on [d - w, d + w], w = K3 - |d|
};

const char* to_string(WalkRegime r);
const char* to_string(StepLaw l);

struct DriftWalkSpec {
  WalkRegime regime = WalkRegime::SingleUp;
  StepLaw law = StepLaw::TwoPoint;
  double K1 = 0.5;   // drift in the first leg
  double K2 = 0.5;   // drift (magnitude) in the second leg
  double K3 = 1.0;   // step magnitude bound; K3 >= max(K1, K2)
  double T0 = 0.0;   // leg-switch level (UpThenDown / UpThenUp)
  double T = 0.0;    // stopping level
  double xi0 = 0.0;  // starting point

  void validate() const;  // throws ConfigError
};

struct WalkStats {
  double mean = 0.0;       // mean of tau (SingleUp) or tau - tau0 (UpThen*)
  double sd = 0.0;
  double ci95_half = 0.0;
  double bound = 0.0;      // closed-form upper bound on the same mean
  double mean_tau0 = 0.0;  // mean first-leg length (0 for SingleUp)
  std::size_t trials = 0;
  std::size_t guard_hits = 0;  // trials stopped by the step guard (excluded)
};

WalkStats simulate_stopping(const DriftWalkSpec& spec, std::size_t trials,
                            std::uint64_t seed,
                            long long max_steps = 10'000'000);

// Abort-regime design audit at one design length L with backoff rho_prime:
// recomputes the acceptance level, the retransmission-probability bound and
// the resulting expected-length bound, and compares the latter against the
// budget L + 3 sqrt(L).
struct ScheduleAudit {
  double L = 0.0;
  double p0L = 0.0;        // entry posterior 1 - 1/L
  double z0L = 0.0;        // entry log-odds ln(L - 1)
  double aL = 0.0;         // abort level z0L / 2
  double rho_prime = 0.0;
  double log_eps = 0.0;    // acceptance level (-ln of the error target)
  double p1_hi = 0.0;      // retransmission-probability upper bound
  double ewl = 0.0;        // expected-length upper bound
  double ewl_budget = 0.0; // L + 3 sqrt(L)
  double md_ratio = 0.0;   // log_eps / (L * rho_prime)
  bool feasible = false;
  std::string note;
};

ScheduleAudit audit_schedule(const ChannelInfo& info, double L,
                             double rho_prime, double const_q = 0.0);

// Roots 0 < a <= A of x/C = ln(x)/B + b. Throws InfeasibleError when b is
// below the critical value (1 - ln(C/B))/B and no real root exists.
struct ConverseRoots {
  double a = 0.0;
  double A = 0.0;
  double ratio = 0.0;    // A / a
  double resid_a = 0.0;  // |a/C - ln(a)/B - b|
  double resid_A = 0.0;
  bool tangent = false;  // b at the critical value: a == A == C/B
};

ConverseRoots converse_roots(double B, double C, double b);

// True when the measured mean conditional entropy is consistent with the
// measured error probability: mean_h <= hbin(pe~) + pe~ ln(M-1) up to three
// confidence radii on each side, pe~ = pe + 3 ci_pe.
bool fano_check(double mean_h, double ci_h, double pe, double ci_pe,
                std::size_t M);

}  // namespace vlf
