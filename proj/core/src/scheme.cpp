#include "vlf/scheme.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>

#include "vlf/errors.hpp"
#include "vlf/logprob.hpp"

namespace vlf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double logit(double p) { return std::log(p) - std::log1p(-p); }

// Binary entropy (nats) of the distribution {sigmoid(z), sigmoid(-z)},
// stable for |z| large.
double binary_entropy_from_logit(double z) {
  const double lp = log_sigmoid(z);
  const double lq = log_sigmoid(-z);
  double h = 0.0;
  if (std::isfinite(lp)) h -= std::exp(lp) * lp;
  if (std::isfinite(lq)) h -= std::exp(lq) * lq;
  return h < 0.0 ? 0.0 : h;
}

}  // namespace

const char* to_string(Regime r) {
  return r == Regime::NoAbort ? "no_abort" : "abort_retx";
}

const char* to_string(ThresholdMode m) {
  return m == ThresholdMode::Theory ? "theory" : "calibrated";
}

void SchemeParams::validate(const Dmc& dmc) const {
  if (M < 2) throw ConfigError("scheme: need at least 2 messages");
  if (!(N > 0.0) || !std::isfinite(N)) throw ConfigError("scheme: N must be positive and finite");
  if (!(p0 >= 0.5) || !(p0 < 1.0)) throw ConfigError("scheme: p0 must lie in [0.5, 1)");
  if (!std::isfinite(z_enter)) throw ConfigError("scheme: entry log-odds must be finite");
  if (!(z_accept >= z_enter - 1e-9))
    throw ConfigError("scheme: acceptance threshold below entry log-odds");
  if (regime == Regime::AbortRetx) {
    if (!(L > 2.0)) throw ConfigError("scheme: abort regime needs design length > 2");
    if (!(z_abort < z_enter)) throw ConfigError("scheme: abort threshold must sit below entry");
  }
  if (n_max < 1) throw ConfigError("scheme: safety horizon must be at least 1");
  if (x0 >= dmc.nx || x0_prime >= dmc.nx || x0 == x0_prime)
    throw ConfigError("scheme: hypothesis input pair invalid for this channel");
  if (px.size() != dmc.nx) throw ConfigError("scheme: partition distribution size mismatch");
  double s = 0.0;
  for (double v : px) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("scheme: partition weights must be nonnegative");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError("scheme: partition weights must sum to 1");
}

double design_length_from_n(double N) {
  if (!(N > 0.0) || !std::isfinite(N)) throw ConfigError("design length: N must be positive and finite");
  const double s = (-3.0 + std::sqrt(9.0 + 4.0 * N)) / 2.0;
  return s * s;
}

double hypothesis_mode_drift(const Dmc& dmc, const ChannelInfo& info,
                             double u, double v) {
  const std::size_t x0 = info.x0, x0p = info.x0_prime;
  if (x0 == x0p) throw ConfigError("hypothesis drift: channel has a single input");
  if (!(u >= 0.0) || !(v >= 0.0) || u + v > 1.0 + 1e-12)
    throw ConfigError("hypothesis drift: (u, v) outside the simplex");
  const double rest = std::max(0.0, 1.0 - u - v);
  double acc = 0.0;
  for (std::size_t y = 0; y < dmc.ny; ++y) {
    const double pt = dmc.at(x0p, y);  // law of the true message's input
    if (pt <= 0.0) continue;
    const double den = u * dmc.at(x0, y) + rest * pt;
    const double num = pt * (1.0 - v);
    if (den <= 0.0) return kInf;
    acc += pt * std::log(num / den);
  }
  return acc;
}

namespace {

// Root of psi(u, .) = C on [0, vmax]; nullopt when psi - C keeps one sign.
// min_g tracks the smallest psi - C seen, for the slack classification.
std::optional<double> root_in_v(const Dmc& dmc, const ChannelInfo& info,
                                double u, double vmax, double& min_g) {
  const double C = info.C;
  auto g = [&](double v) { return hypothesis_mode_drift(dmc, info, u, v) - C; };
  constexpr int kGrid = 64;
  double prev_v = 0.0, prev_g = g(0.0);
  min_g = std::min(min_g, prev_g);
  if (std::abs(prev_g) < 1e-11) return 0.0;
  for (int i = 1; i <= kGrid; ++i) {
    const double v = vmax * static_cast<double>(i) / kGrid;
    const double gv = g(v);
    min_g = std::min(min_g, gv);
    if (std::abs(gv) < 1e-11) return v;
    if ((prev_g < 0.0) != (gv < 0.0)) {
      double lo = prev_v, hi = v, glo = prev_g;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if (std::abs(gm) < 1e-12) return mid;
        if ((glo < 0.0) == (gm < 0.0)) {
          lo = mid;
          glo = gm;
        } else {
          hi = mid;
        }
      }
      return 0.5 * (lo + hi);
    }
    prev_v = v;
    prev_g = gv;
  }
  return std::nullopt;
}

}  // namespace

double solve_p0(const Dmc& dmc, const ChannelInfo& info, double* v_star,
                bool* binding) {
  if (!info.has_capacity())
    throw ConfigError("entry threshold: channel info lacks a capacity value");
  if (!(info.B_star > info.C))
    throw ConfigError(
        "entry threshold: only defined when the reverse divergence exceeds "
        "capacity (abort regime applies otherwise)");
  if (v_star) *v_star = std::numeric_limits<double>::quiet_NaN();
  if (binding) *binding = false;

  double min_g = kInf;
  auto root_at = [&](double u) {
    return root_in_v(dmc, info, u, std::min(1.0 - u, 0.5), min_g);
  };

  constexpr double kStep = 1e-4;
  double prev_u = 0.5;
  std::optional<double> first_v;
  double first_u = 0.0;
  const int n_steps = static_cast<int>(std::floor(0.5 / kStep));
  for (int i = 0; i <= n_steps; ++i) {
    const double u = std::min(0.5 + kStep * i, 1.0 - 1e-12);
    if (auto v = root_at(u)) {
      first_u = u;
      first_v = v;
      break;
    }
    prev_u = u;
  }

  if (!first_v) {
    if (min_g > 0.0) return 0.5;  // drift exceeds C everywhere: never binds
    throw InfeasibleError(
        "entry threshold: the drift boundary has no solution in the "
        "admissible region");
  }

  // Smallest u carrying a root, to bisection precision.
  double lo = prev_u, hi = first_u, hi_v = *first_v;
  if (hi > 0.5) {
    for (int it = 0; it < 50; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (auto v = root_at(mid)) {
        hi = mid;
        hi_v = *v;
      } else {
        lo = mid;
      }
      if (hi - lo < 1e-12) break;
    }
  }
  if (v_star) *v_star = hi_v;
  if (binding) *binding = true;
  return hi;
}

double theory_threshold(const ChannelInfo& info, Regime regime, double N,
                        double rho, double const_q) {
  if (!info.has_capacity())
    throw ConfigError("threshold: channel info lacks a capacity value");
  if (!info.finite_B || !std::isfinite(info.B))
    throw InfeasibleError(
        "threshold: channel has unbounded log-likelihood ratios; calibrate "
        "instead");
  if (!(info.C > 0.0)) throw InfeasibleError("threshold: channel capacity is zero");
  if (!(N > 0.0) || !(rho > 0.0))
    throw ConfigError("threshold: N and the backoff must be positive");
  double le;
  if (regime == Regime::NoAbort) {
    le = (info.B / info.C) * N * rho - info.B * const_q;
  } else {
    if (!(info.B_star > 0.0))
      throw InfeasibleError("threshold: reverse divergence is zero");
    const double L = design_length_from_n(N);
    if (!(L > 2.0))
      throw InfeasibleError("threshold: abort regime needs design length > 2");
    const double p0L = 1.0 - 1.0 / L;
    const double z0L = std::log(L - 1.0);
    const double rho_p = rho - (3.0 / std::sqrt(L)) * (info.C - rho);
    if (!(rho_p > 0.0))
      throw InfeasibleError("threshold: backoff vanishes at this design length");
    const double coef =
        1.0 / info.C - p0L / info.B + 1.5 * (1.0 - p0L) / info.B_star;
    le = (info.B / p0L) * (L * rho_p / info.C - coef * z0L - const_q);
    if (le < z0L)
      throw InfeasibleError("threshold: degenerate (below the entry log-odds)");
  }
  if (!(le > 0.0)) throw InfeasibleError("threshold: degenerate (nonpositive)");
  return le;
}

SchemeParams make_scheme_params(const Dmc& dmc, const ChannelInfo& info,
                                std::size_t M, double N, double rho,
                                ThresholdMode mode, double const_q,
                                double n_max_mult,
                                std::optional<Regime> force_regime) {
  if (!info.has_capacity())
    throw ConfigError("scheme params: channel info lacks a capacity value");
  if (info.px_star.size() != dmc.nx)
    throw ConfigError("scheme params: capacity input law does not match the channel");
  if (dmc.nx < 2) throw InfeasibleError("scheme params: channel has a single input");
  if (!(info.C > 0.0)) throw InfeasibleError("scheme params: channel capacity is zero");
  if (!(rho > 0.0) || !(rho < info.C))
    throw InfeasibleError("scheme params: backoff must lie in (0, capacity)");
  if (!(n_max_mult > 0.0)) throw ConfigError("scheme params: safety multiplier must be positive");

  SchemeParams p;
  p.M = M;
  p.N = N;
  p.rho = rho;
  p.const_q = const_q;
  p.x0 = info.x0;
  p.x0_prime = info.x0_prime;
  p.px = info.px_star;
  p.regime = force_regime.value_or(info.B_star > info.C ? Regime::NoAbort
                                                        : Regime::AbortRetx);

  if (p.regime == Regime::NoAbort) {
    p.p0 = solve_p0(dmc, info);
    p.z_enter = logit(p.p0);
    p.z_abort = -kInf;
    p.L = 0.0;
    p.rho_prime = std::numeric_limits<double>::quiet_NaN();
  } else {
    p.L = design_length_from_n(N);
    if (!(p.L > 2.0))
      throw InfeasibleError("scheme params: abort regime needs design length > 2");
    p.p0 = 1.0 - 1.0 / p.L;
    p.z_enter = std::log(p.L - 1.0);
    p.z_abort = 0.5 * p.z_enter;
    p.rho_prime = rho - (3.0 / std::sqrt(p.L)) * (info.C - rho);
    if (!(p.rho_prime > 0.0))
      throw InfeasibleError("scheme params: backoff vanishes at this design length");
  }

  if (mode == ThresholdMode::Theory) {
    p.z_accept = theory_threshold(info, p.regime, N, rho, const_q);
    if (p.z_accept < p.z_enter)
      throw InfeasibleError("scheme params: threshold degenerate (below entry)");
  } else {
    double seed_le = p.z_enter + std::max(1.0, 0.1 * N);
    try {
      seed_le = std::max(theory_threshold(info, p.regime, N, rho, const_q),
                         p.z_enter);
    } catch (const InfeasibleError&) {
      // keep the placeholder; calibration replaces it
    }
    p.z_accept = seed_le;
  }

  p.n_max = static_cast<long long>(std::ceil(n_max_mult * N));
  if (p.n_max < 1) p.n_max = 1;
  p.validate(dmc);
  return p;
}

namespace {

struct TrialTables {
  std::vector<double> lk;   // nx * ny log transition kernel
  std::vector<double> llr;  // ny: lk[x0][y] - lk[x0_prime][y]
  const Dmc* dmc = nullptr;

  TrialTables(const Dmc& d, const SchemeParams& p) : dmc(&d) {
    lk.resize(d.nx * d.ny);
    for (std::size_t x = 0; x < d.nx; ++x)
      for (std::size_t y = 0; y < d.ny; ++y) {
        const double v = d.at(x, y);
        lk[x * d.ny + y] = v > 0.0 ? std::log(v) : kNegInf;
      }
    llr.resize(d.ny);
    for (std::size_t y = 0; y < d.ny; ++y)
      llr[y] = lk[p.x0 * d.ny + y] - lk[p.x0_prime * d.ny + y];
  }
  const double* row_lk(std::size_t x) const { return lk.data() + x * dmc->ny; }
};

// Log-odds of entry j against the rest of a normalized log-posterior,
// computed by direct summation over the rest (no cancellation).
double log_odds_direct(const std::vector<double>& lp, std::size_t j) {
  double mx = kNegInf;
  for (std::size_t k = 0; k < lp.size(); ++k)
    if (k != j) mx = std::max(mx, lp[k]);
  if (mx == kNegInf) return kInf;
  double s = 0.0;
  for (std::size_t k = 0; k < lp.size(); ++k)
    if (k != j) s += std::exp(lp[k] - mx);
  return lp[j] - (mx + std::log(s));
}

std::size_t argmax_vec(const std::vector<double>& lp) {
  std::size_t j = 0;
  for (std::size_t k = 1; k < lp.size(); ++k)
    if (lp[k] > lp[j]) j = k;
  return j;
}

void renormalize_floor(std::vector<double>& lp) {
  const double lse = log_sum_exp(lp);
  for (double& v : lp) {
    v -= lse;
    if (v < kLogPostFloor) v = kLogPostFloor;
  }
}

}  // namespace

TrialOutcome run_trial(const Dmc& dmc, const SchemeParams& params,
                       std::uint64_t run_seed, std::uint64_t trial_idx) {
  const TrialTables tb(dmc, params);
  const std::size_t M = params.M;
  const double* lk_x0 = tb.row_lk(params.x0);
  const double* lk_x0p = tb.row_lk(params.x0_prime);

  Xoshiro256pp msg_rng(stream_seed(run_seed, trial_idx, 0, kStreamMessage));
  const auto w_true = static_cast<std::uint32_t>(msg_rng.next() % M);

  TrialOutcome out;
  out.w_true = w_true;
  long long tau_total = 0;

  std::vector<double> lp(M), lp_entry(M);
  std::vector<std::size_t> assign(M);

  for (std::uint64_t attempt = 0;; ++attempt) {
    Xoshiro256pp noise(stream_seed(run_seed, trial_idx, attempt, kStreamNoise));
    Xoshiro256pp part(stream_seed(run_seed, trial_idx, attempt, kStreamPartition));

    const double lp0 = -std::log(static_cast<double>(M));
    std::fill(lp.begin(), lp.end(), lp0);
    long long phase1 = 0, phase2 = 0;

    bool hyp = false;
    std::size_t j0 = 0;
    double z = 0.0;        // hypothesis log-odds
    double acc_rest = 0.0; // shared log-mass shift of the non-hypothesis entries
    double h_rest = 0.0;   // entropy of the conditional rest distribution at entry

    auto fold_back = [&]() {
      for (std::size_t k = 0; k < M; ++k)
        if (k != j0) lp[k] = lp_entry[k] + acc_rest;
      lp[j0] = log_sigmoid(z);
      renormalize_floor(lp);
    };

    auto enter_hypothesis = [&](std::size_t j, double zj) {
      j0 = j;
      z = zj;
      acc_rest = 0.0;
      lp_entry = lp;
      // Snapshot of the conditional rest distribution: its entropy is frozen
      // while the binary test runs.
      double mx = kNegInf;
      for (std::size_t k = 0; k < M; ++k)
        if (k != j0) mx = std::max(mx, lp[k]);
      double s = 0.0;
      for (std::size_t k = 0; k < M; ++k)
        if (k != j0) s += std::exp(lp[k] - mx);
      const double rest_lse = mx + std::log(s);
      h_rest = 0.0;
      for (std::size_t k = 0; k < M; ++k) {
        if (k == j0) continue;
        const double r = lp[k] - rest_lse;
        if (r > kNegInf && std::isfinite(r)) {
          const double pr = std::exp(r);
          if (pr > 0.0) h_rest -= pr * r;
        }
      }
      if (h_rest < 0.0) h_rest = 0.0;
      hyp = true;
    };

    auto accept = [&](std::size_t j, double zj) {
      out.tau = tau_total;
      out.attempts = static_cast<int>(attempt) + 1;
      out.w_hat = static_cast<std::uint32_t>(j);
      out.error = (out.w_hat != w_true);
      out.aborted = false;
      out.phase1_len = phase1;
      out.phase2_len = phase2;
      out.z_final = zj;
      out.log_pe_post = log_sigmoid(-zj);
      const double pj = std::exp(log_sigmoid(zj));
      out.h_stop = binary_entropy_from_logit(zj) + (1.0 - pj) * h_rest;
    };

    bool retransmit = false;
    while (true) {
      if (hyp) {
        if (z >= params.z_accept) {
          accept(j0, z);
          return out;
        }
        if (params.regime == Regime::AbortRetx && z <= params.z_abort) {
          retransmit = true;
          break;
        }
        if (params.regime == Regime::NoAbort && z < params.z_enter) {
          fold_back();
          hyp = false;
        }
      }
      if (!hyp) {
        const std::size_t jmax = argmax_vec(lp);
        const double zmax = log_odds_direct(lp, jmax);
        if (zmax >= params.z_enter) {
          enter_hypothesis(jmax, zmax);
          if (z >= params.z_accept) {  // degenerate: accept at entry
            accept(j0, z);
            return out;
          }
        }
      }
      if (tau_total >= params.n_max) {
        if (hyp) fold_back();
        const std::size_t jhat = argmax_vec(lp);
        out.tau = tau_total;
        out.attempts = static_cast<int>(attempt) + 1;
        out.w_hat = static_cast<std::uint32_t>(jhat);
        out.error = (out.w_hat != w_true);
        out.aborted = true;
        out.phase1_len = phase1;
        out.phase2_len = phase2;
        const double zj = log_odds_direct(lp, jhat);
        out.z_final = zj;
        out.log_pe_post = log_sigmoid(-zj);
        out.h_stop = entropy(PosteriorState{lp});
        return out;
      }

      if (hyp) {
        const std::size_t x = (w_true == j0) ? params.x0 : params.x0_prime;
        const std::size_t y = sample_categorical(noise, dmc.row(x));
        // Output marginal under the current binary state, before the update.
        const double ln_py =
            log_add(log_sigmoid(z) + lk_x0[y], log_sigmoid(-z) + lk_x0p[y]);
        if (ln_py == kNegInf)
          throw InvariantError("trial: sampled output has zero predictive mass");
        z += tb.llr[y];
        acc_rest += lk_x0p[y] - ln_py;
        ++phase2;
      } else {
        for (std::size_t m = 0; m < M; ++m)
          assign[m] = sample_categorical(part, params.px);
        const std::size_t y = sample_categorical(noise, dmc.row(assign[w_true]));
        for (std::size_t m = 0; m < M; ++m) lp[m] += tb.row_lk(assign[m])[y];
        const double lse = log_sum_exp(lp);
        if (lse == kNegInf)
          throw InvariantError("trial: sampled output has zero predictive mass");
        for (double& v : lp) {
          v -= lse;
          if (v < kLogPostFloor) v = kLogPostFloor;
        }
        ++phase1;
      }
      ++tau_total;
    }

    if (!retransmit)
      throw InvariantError("trial: attempt ended without a decision or abort");
  }
}

TrialOutcome run_trial_instrumented(const Dmc& dmc, const SchemeParams& params,
                                    std::uint64_t run_seed,
                                    std::uint64_t trial_idx,
                                    TrialObserver* observer) {
  const std::size_t M = params.M;

  Xoshiro256pp msg_rng(stream_seed(run_seed, trial_idx, 0, kStreamMessage));
  const auto w_true = static_cast<std::uint32_t>(msg_rng.next() % M);

  TrialOutcome out;
  out.w_true = w_true;
  long long tau_total = 0;

  EncoderMap hyp_enc, part_enc;
  hyp_enc.x_of.resize(M);
  part_enc.x_of.resize(M);

  for (std::uint64_t attempt = 0;; ++attempt) {
    Xoshiro256pp noise(stream_seed(run_seed, trial_idx, attempt, kStreamNoise));
    Xoshiro256pp part(stream_seed(run_seed, trial_idx, attempt, kStreamPartition));

    PosteriorState st = init_uniform(M);
    long long phase1 = 0, phase2 = 0;
    bool hyp = false;
    std::size_t j0 = 0;

    auto finish = [&](std::size_t j, bool aborted) {
      out.tau = tau_total;
      out.attempts = static_cast<int>(attempt) + 1;
      out.w_hat = static_cast<std::uint32_t>(j);
      out.error = (out.w_hat != w_true);
      out.aborted = aborted;
      out.phase1_len = phase1;
      out.phase2_len = phase2;
      const double zj = log_odds(st, j);
      out.z_final = zj;
      out.log_pe_post = log_sigmoid(-zj);
      out.h_stop = entropy(st);
    };

    bool retransmit = false;
    while (true) {
      if (hyp) {
        const double z = log_odds(st, j0);
        if (z >= params.z_accept) {
          finish(j0, false);
          return out;
        }
        if (params.regime == Regime::AbortRetx && z <= params.z_abort) {
          retransmit = true;
          break;
        }
        if (params.regime == Regime::NoAbort && z < params.z_enter) hyp = false;
      }
      if (!hyp) {
        const std::size_t jmax = argmax_lp(st);
        const double zmax = log_odds(st, jmax);
        if (zmax >= params.z_enter) {
          j0 = jmax;
          hyp = true;
          if (zmax >= params.z_accept) {  // degenerate: accept at entry
            finish(j0, false);
            return out;
          }
        }
      }
      if (tau_total >= params.n_max) {
        finish(argmax_lp(st), true);
        return out;
      }

      if (hyp) {
        for (std::size_t m = 0; m < M; ++m)
          hyp_enc.x_of[m] = (m == j0) ? params.x0 : params.x0_prime;
        if (observer) observer->on_step(st, hyp_enc, j0, w_true);
        const std::size_t y =
            sample_categorical(noise, dmc.row(hyp_enc.x_of[w_true]));
        bayes_update(st, hyp_enc, dmc, y);
        ++phase2;
      } else {
        for (std::size_t m = 0; m < M; ++m)
          part_enc.x_of[m] = sample_categorical(part, params.px);
        if (observer)
          observer->on_step(st, part_enc, TrialObserver::npos, w_true);
        const std::size_t y =
            sample_categorical(noise, dmc.row(part_enc.x_of[w_true]));
        bayes_update(st, part_enc, dmc, y);
        ++phase1;
      }
      ++tau_total;
    }

    if (!retransmit)
      throw InvariantError("trial: attempt ended without a decision or abort");
  }
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("VLF_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end && *end == '\0' && v >= 1 && v <= 1024)
      return static_cast<std::size_t>(v);
    throw ConfigError("VLF_THREADS must be an integer in [1, 1024]");
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc >= 1 ? hc : 1;
}

std::vector<TrialOutcome> run_trials(const Dmc& dmc, const SchemeParams& params,
                                     std::uint64_t run_seed, std::size_t trials,
                                     std::size_t threads) {
  params.validate(dmc);
  std::vector<TrialOutcome> out(trials);
  const std::size_t t = std::max<std::size_t>(
      1, std::min(resolve_threads(threads), std::max<std::size_t>(trials, 1)));
  if (t == 1 || trials < 2) {
    for (std::size_t i = 0; i < trials; ++i)
      out[i] = run_trial(dmc, params, run_seed, i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_err;
  auto worker = [&]() {
    try {
      for (;;) {
        const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= trials) return;
        out[i] = run_trial(dmc, params, run_seed, i);
      }
    } catch (...) {
      std::lock_guard<std::mutex> g(err_mu);
      if (!first_err) first_err = std::current_exception();
      next.store(trials, std::memory_order_relaxed);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t i = 0; i < t; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_err) std::rethrow_exception(first_err);
  return out;
}

namespace {

struct MeanEval {
  double mean = 0.0;
  double ci95_half = 0.0;
  std::size_t used = 0;
};

MeanEval mean_tau_at(const Dmc& dmc, SchemeParams& params, double z,
                     std::uint64_t seed, std::size_t trials,
                     std::size_t threads) {
  params.z_accept = z;
  const auto outcomes = run_trials(dmc, params, seed, trials, threads);
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (const auto& o : outcomes) {
    if (o.aborted) continue;
    ++n;
    const double x = static_cast<double>(o.tau);
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  if (n == 0)
    throw ConfigError("calibration: every trial hit the safety horizon");
  MeanEval ev;
  ev.mean = mean;
  ev.used = n;
  if (n > 1) {
    const double var = m2 / static_cast<double>(n - 1);
    ev.ci95_half = 1.959963984540054 * std::sqrt(var / static_cast<double>(n));
  }
  return ev;
}

}  // namespace

CalibrationResult calibrate_threshold(const Dmc& dmc, SchemeParams& params,
                                      double target_n, std::size_t trials,
                                      double tol_rel, std::uint64_t seed,
                                      std::size_t threads) {
  params.validate(dmc);
  if (!(target_n > 0.0) || !std::isfinite(target_n))
    throw ConfigError("calibration: target must be positive and finite");
  if (trials < 100) throw ConfigError("calibration: need at least 100 trials");
  if (!(tol_rel > 0.0) || !(tol_rel < 1.0))
    throw ConfigError("calibration: relative tolerance must lie in (0, 1)");

  const double tol_abs = tol_rel * target_n;
  int evals = 0;
  CalibrationResult best;
  best.z_accept = std::numeric_limits<double>::quiet_NaN();
  double best_gap = kInf;

  auto eval = [&](double z) {
    const MeanEval ev = mean_tau_at(dmc, params, z, seed, trials, threads);
    ++evals;
    const double gap = std::abs(ev.mean - target_n);
    if (gap < best_gap) {
      best_gap = gap;
      best.z_accept = z;
      best.mean_tau = ev.mean;
      best.ci95_half = ev.ci95_half;
    }
    return ev.mean;
  };

  // Bracket the target between two thresholds.
  double g0 = params.z_accept;
  if (!(g0 > params.z_enter + 1e-9))
    g0 = params.z_enter + std::max(1.0, 0.1 * target_n);
  double lo = params.z_enter, m_lo = -kInf;  // mean at z_enter is below target
  double hi = 0.0, m_hi = 0.0;
  bool have_hi = false;

  double guess = g0, m_guess = eval(g0);
  if (std::abs(m_guess - target_n) <= tol_abs) {
    params.z_accept = best.z_accept;
    best.evaluations = evals;
    return best;
  }
  if (m_guess < target_n) {
    lo = guess;
    m_lo = m_guess;
    double step = std::max(guess - params.z_enter, 1.0);
    for (int k = 0; k < 64 && !have_hi; ++k) {
      const double cand = lo + step;
      const double m = eval(cand);
      if (std::abs(m - target_n) <= tol_abs) {
        params.z_accept = best.z_accept;
        best.evaluations = evals;
        return best;
      }
      if (m >= target_n) {
        hi = cand;
        m_hi = m;
        have_hi = true;
      } else {
        lo = cand;
        m_lo = m;
        step *= 2.0;
      }
      if (step > 1e12)
        throw ConfigError("calibration: cannot bracket the target mean");
    }
    if (!have_hi)
      throw ConfigError("calibration: cannot bracket the target mean");
  } else {
    hi = guess;
    m_hi = m_guess;
    have_hi = true;
    // Shrink toward the entry threshold until the mean falls below target.
    while (m_lo == -kInf) {
      const double cand = params.z_enter + 0.5 * (lo == params.z_enter
                                                      ? hi - params.z_enter
                                                      : lo - params.z_enter);
      if (cand - params.z_enter < 1e-9)
        throw ConfigError(
            "calibration: target mean is below the hypothesis-entry time");
      const double m = eval(cand);
      if (std::abs(m - target_n) <= tol_abs) {
        params.z_accept = best.z_accept;
        best.evaluations = evals;
        return best;
      }
      if (m < target_n) {
        lo = cand;
        m_lo = m;
      } else {
        hi = cand;
        m_hi = m;
      }
    }
  }

  // False-position refinement on the bracket.
  for (int it = 0; it < 48; ++it) {
    double t = (target_n - m_lo) / (m_hi - m_lo);
    t = std::clamp(t, 0.05, 0.95);
    const double cand = lo + t * (hi - lo);
    const double m = eval(cand);
    if (std::abs(m - target_n) <= tol_abs) break;
    if (m < target_n) {
      lo = cand;
      m_lo = m;
    } else {
      hi = cand;
      m_hi = m;
    }
    if (hi - lo <= 1e-10 * std::max(1.0, std::abs(hi))) break;
  }

  if (best_gap > tol_abs && best_gap > 3.0 * std::max(best.ci95_half, 1e-12))
    throw ConfigError(
        "calibration: did not reach the target mean within tolerance");
  params.z_accept = best.z_accept;
  best.evaluations = evals;
  return best;
}

}  // namespace vlf
