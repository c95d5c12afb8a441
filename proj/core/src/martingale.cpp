#include "vlf/martingale.hpp"

#include <cmath>
#include <limits>

#include "vlf/errors.hpp"
#include "vlf/logprob.hpp"
#include "vlf/rng.hpp"

namespace vlf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// ln(e^x - 1), stable for large x.
double ln_expm1(double x) {
  if (x <= 0.0) throw ConfigError("ln(e^x - 1) needs x > 0");
  if (x > 36.0) return x + std::log1p(-std::exp(-x));
  return std::log(std::expm1(x));
}
}  // namespace

const char* to_string(WalkRegime r) {
  switch (r) {
    case WalkRegime::SingleUp: return "single_up";
    case WalkRegime::UpThenDown: return "up_then_down";
    default: return "up_then_up";
  }
}

const char* to_string(StepLaw l) {
  return l == StepLaw::TwoPoint ? "two_point" : "trunc_uniform";
}

void DriftWalkSpec::validate() const {
  if (!(K1 > 0.0) || !(K2 > 0.0)) throw ConfigError("walk: drifts must be positive");
  if (!(K3 >= K1) || !(K3 >= K2))
    throw ConfigError("walk: step bound K3 must dominate both drifts");
  if (!std::isfinite(xi0) || !std::isfinite(T) || !std::isfinite(T0))
    throw ConfigError("walk: levels must be finite");
  if (regime == WalkRegime::UpThenDown && !(T <= T0))
    throw ConfigError("walk: down leg needs T <= T0");
  if (regime == WalkRegime::UpThenUp && !(T >= T0))
    throw ConfigError("walk: second up leg needs T >= T0");
}

namespace {

double draw_step(Xoshiro256pp& rng, StepLaw law, double drift, double K3) {
  if (law == StepLaw::TwoPoint) {
    const double p_up = 0.5 * (1.0 + drift / K3);
    return rng.uniform01() < p_up ? K3 : -K3;
  }
  const double w = K3 - std::abs(drift);
  if (w <= 0.0) return drift;
  return drift + (2.0 * rng.uniform01() - 1.0) * w;
}

double walk_bound(const DriftWalkSpec& s) {
  if (s.regime == WalkRegime::SingleUp) {
    double b = std::abs(s.T) / s.K2;
    if (s.xi0 < 0.0)
      b -= s.xi0 / s.K1;
    else
      b -= s.xi0 / s.K2;
    return std::max(b, 0.0);
  }
  return (std::abs(s.T0 - s.T) + 3.0 * s.K3) / s.K2;
}

}  // namespace

WalkStats simulate_stopping(const DriftWalkSpec& spec, std::size_t trials,
                            std::uint64_t seed, long long max_steps) {
  spec.validate();
  if (trials == 0) throw ConfigError("walk: need at least one trial");
  if (max_steps < 1) throw ConfigError("walk: step guard must be positive");

  WalkStats st;
  st.bound = walk_bound(spec);

  double mean = 0.0, m2 = 0.0, mean_tau0 = 0.0;
  std::size_t n = 0;

  for (std::size_t t = 0; t < trials; ++t) {
    Xoshiro256pp rng(stream_seed(seed, t, 0, kStreamWalk));
    double xi = spec.xi0;
    long long steps = 0, tau0 = 0;
    bool guard = false;

    if (spec.regime != WalkRegime::SingleUp) {
      while (xi < spec.T0) {
        if (steps >= max_steps) {
          guard = true;
          break;
        }
        xi += draw_step(rng, spec.law, spec.K1, spec.K3);
        ++steps;
      }
      tau0 = steps;
    }

    if (!guard) {
      auto stopped = [&]() {
        switch (spec.regime) {
          case WalkRegime::SingleUp: return xi >= spec.T;
          case WalkRegime::UpThenDown: return xi <= spec.T;
          default: return xi >= spec.T;
        }
      };
      while (!stopped()) {
        if (steps >= max_steps) {
          guard = true;
          break;
        }
        double drift;
        if (spec.regime == WalkRegime::SingleUp)
          drift = xi < 0.0 ? spec.K1 : spec.K2;
        else if (spec.regime == WalkRegime::UpThenDown)
          drift = -spec.K2;
        else
          drift = spec.K2;
        xi += draw_step(rng, spec.law, drift, spec.K3);
        ++steps;
      }
    }

    if (guard) {
      ++st.guard_hits;
      continue;
    }
    const double v = static_cast<double>(steps - tau0);
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
    mean_tau0 += (static_cast<double>(tau0) - mean_tau0) / static_cast<double>(n);
  }

  st.trials = n;
  st.mean = mean;
  st.mean_tau0 = mean_tau0;
  if (n > 1) {
    const double var = m2 / static_cast<double>(n - 1);
    st.sd = std::sqrt(var);
    st.ci95_half = 1.959963984540054 * st.sd / std::sqrt(static_cast<double>(n));
  }
  return st;
}

ScheduleAudit audit_schedule(const ChannelInfo& info, double L,
                             double rho_prime, double const_q) {
  if (!info.has_capacity())
    throw ConfigError("schedule audit: channel info lacks a capacity value");
  if (!info.finite_B || !(info.B > 0.0) || !(info.B_star > 0.0))
    throw ConfigError("schedule audit: needs finite positive divergences");
  if (!(info.C > 0.0)) throw ConfigError("schedule audit: zero-capacity channel");
  if (!(L > 2.0)) throw ConfigError("schedule audit: design length must exceed 2");

  ScheduleAudit a;
  a.L = L;
  a.p0L = 1.0 - 1.0 / L;
  a.z0L = std::log(L - 1.0);
  a.aL = 0.5 * a.z0L;
  a.rho_prime = rho_prime;
  a.ewl_budget = L + 3.0 * std::sqrt(L);
  a.ewl = std::numeric_limits<double>::quiet_NaN();
  a.p1_hi = std::numeric_limits<double>::quiet_NaN();
  a.md_ratio = std::numeric_limits<double>::quiet_NaN();

  if (!(rho_prime > 0.0) || !(rho_prime < info.C)) {
    a.log_eps = std::numeric_limits<double>::quiet_NaN();
    a.note = "backoff outside (0, capacity)";
    return a;
  }

  const double B = info.B, Bs = info.B_star, C = info.C;
  const double coef = 1.0 / C - a.p0L / B + 1.5 * (1.0 - a.p0L) / Bs;
  a.log_eps = (B / a.p0L) * (L * rho_prime / C - coef * a.z0L - const_q);
  a.md_ratio = a.log_eps / (L * rho_prime);

  if (!(a.log_eps > a.z0L)) {
    a.note = "acceptance level below the entry log-odds";
    return a;
  }

  // Retransmission-probability bound for a correct hypothesis: the log-odds
  // start at z0L, gain at least -C2 per step in the worst direction, and the
  // attempt ends at either the acceptance level or the abort level.
  const double eps = std::exp(-a.log_eps);
  const double c2 = std::isfinite(info.C2) ? info.C2 : 0.0;
  const double num = std::exp(-a.z0L) - eps * std::exp(-c2);
  const double den = std::exp(-a.aL) - eps * std::exp(-c2);
  if (!(num > 0.0) || !(den > 0.0)) {
    a.note = "retransmission bound degenerate at this design length";
    return a;
  }
  a.p1_hi = num / den;
  if (!(a.p1_hi < 1.0)) {
    a.note = "retransmission bound reaches 1";
    return a;
  }

  const double rhs = a.p0L * a.log_eps / B + ln_expm1(L * (C - rho_prime)) / C +
                     (1.0 / C - a.p0L / B + (1.0 - a.p0L) / Bs) * a.z0L +
                     (1.0 - a.p0L) * a.aL / Bs + const_q;
  a.ewl = rhs / (a.p0L * (1.0 - a.p1_hi));
  a.feasible = true;
  return a;
}

ConverseRoots converse_roots(double B, double C, double b) {
  if (!(B > 0.0) || !(C > 0.0)) throw ConfigError("roots: B and C must be positive");
  if (!std::isfinite(b)) throw ConfigError("roots: offset must be finite");

  auto g = [&](double x) { return x / C - std::log(x) / B - b; };
  const double x_star = C / B;  // unique minimum of g
  const double g_star = g(x_star);
  const double scale = std::max({1.0, std::abs(b), 1.0 / B});

  ConverseRoots r;
  if (g_star > 1e-12 * scale)
    throw InfeasibleError("roots: no real solution (offset below critical value)");
  if (std::abs(g_star) <= 1e-12 * scale) {
    r.a = r.A = x_star;
    r.ratio = 1.0;
    r.tangent = true;
    r.resid_a = r.resid_A = std::abs(g_star);
    return r;
  }

  auto bisect = [&](double lo, double hi) {
    // g(lo) and g(hi) straddle zero.
    double glo = g(lo);
    for (int it = 0; it < 400; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      const double gm = g(mid);
      if ((glo > 0.0) == (gm > 0.0)) {
        lo = mid;
        glo = gm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  };

  double lo = x_star;
  while (g(lo) <= 0.0) {
    lo *= 0.5;
    if (lo < 1e-300) throw InvariantError("roots: lower bracket failed");
  }
  r.a = bisect(lo, x_star);

  double hi = x_star;
  while (g(hi) <= 0.0) {
    hi *= 2.0;
    if (hi > 1e300) throw InvariantError("roots: upper bracket failed");
  }
  r.A = bisect(x_star, hi);

  r.ratio = r.A / r.a;
  r.resid_a = std::abs(g(r.a));
  r.resid_A = std::abs(g(r.A));
  return r;
}

bool fano_check(double mean_h, double ci_h, double pe, double ci_pe,
                std::size_t M) {
  if (M < 2) throw ConfigError("entropy check: need at least 2 messages");
  if (!(mean_h >= -1e-12) || !(ci_h >= 0.0) || !(ci_pe >= 0.0))
    throw ConfigError("entropy check: malformed statistics");
  double pe_eff = std::max(pe, 0.0) + 3.0 * ci_pe;
  if (pe_eff > 1.0) pe_eff = 1.0;
  const double rhs = hbin(std::min(pe_eff, 0.5)) +
                     pe_eff * std::log(static_cast<double>(M - 1));
  return mean_h <= rhs + 3.0 * ci_h + 1e-12;
}

}  // namespace vlf
