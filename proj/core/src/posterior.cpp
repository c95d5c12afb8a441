#include "vlf/posterior.hpp"

#include <algorithm>
#include <cmath>

#include "vlf/errors.hpp"
#include "vlf/logprob.hpp"

namespace vlf {

namespace {

double log_kernel(const Dmc& dmc, std::size_t x, std::size_t y) {
  double v = dmc.at(x, y);
  return v > 0.0 ? std::log(v) : kNegInf;
}

// log sum over k != j of exp(lp[k] + add_k); add = nullptr means zero.
double lse_rest(const PosteriorState& st, std::size_t j, const EncoderMap* enc,
                const Dmc* dmc, std::size_t y) {
  double hi = kNegInf;
  std::vector<double> terms;
  terms.reserve(st.size() - 1);
  for (std::size_t k = 0; k < st.size(); ++k) {
    if (k == j) continue;
    double t = st.lp[k];
    if (enc) t += log_kernel(*dmc, enc->x_of[k], y);
    terms.push_back(t);
    hi = std::max(hi, t);
  }
  if (hi == kNegInf) return kNegInf;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - hi);
  return hi + std::log(s);
}

void check_state(const PosteriorState& st, const EncoderMap& enc, const Dmc& dmc) {
  if (st.size() < 2) throw ConfigError("posterior: need at least 2 messages");
  if (enc.size() != st.size()) throw ConfigError("posterior: encoder map size mismatch");
  for (auto x : enc.x_of)
    if (x >= dmc.nx) throw ConfigError("posterior: encoder map input out of range");
}

}  // namespace

PosteriorState init_uniform(std::size_t M) {
  if (M < 2) throw ConfigError("init_uniform: need M >= 2");
  PosteriorState st;
  st.lp.assign(M, -std::log(static_cast<double>(M)));
  return st;
}

double bayes_update(PosteriorState& st, const EncoderMap& enc, const Dmc& dmc,
                    std::size_t y) {
  check_state(st, enc, dmc);
  if (y >= dmc.ny) throw ConfigError("bayes_update: output symbol out of range");
  for (std::size_t j = 0; j < st.size(); ++j)
    st.lp[j] += log_kernel(dmc, enc.x_of[j], y);
  double ln_py = log_sum_exp(st.lp);
  if (ln_py == kNegInf)
    throw InvariantError("bayes_update: observation has zero predictive probability");
  for (auto& v : st.lp) v = std::max(v - ln_py, kLogPostFloor);
  return ln_py;
}

namespace {

// Entropy of the distribution q_k = exp(v[k] - ln_norm). The largest entry's
// term is derived from the mass of the others: when the posterior
// concentrates, the leader's normalized log-probability saturates toward
// -0.0 (the rest mass drops below one ulp) and the direct -q ln q term turns
// into quantization noise comparable to the whole entropy, while
// -(1 - r) log1p(-r) keeps full relative precision.
double entropy_of_logits(std::span<const double> v, double ln_norm) {
  std::size_t jm = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[jm]) jm = j;
  double rest = 0.0, h = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (j == jm || v[j] == kNegInf) continue;
    double lq = v[j] - ln_norm;
    double q = std::exp(lq);
    rest += q;
    h -= q * lq;
  }
  if (rest > 0.0 && rest < 1.0) {
    h -= (1.0 - rest) * std::log1p(-rest);
  } else if (v[jm] != kNegInf) {
    double lq = v[jm] - ln_norm;
    h -= std::exp(lq) * lq;
  }
  return std::max(h, 0.0);
}

}  // namespace

double entropy(const PosteriorState& st) {
  return entropy_of_logits(st.lp, 0.0);
}

std::size_t argmax_lp(const PosteriorState& st) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < st.size(); ++j)
    if (st.lp[j] > st.lp[best]) best = j;
  return best;
}

double log_odds(const PosteriorState& st, std::size_t j) {
  if (j >= st.size()) throw ConfigError("log_odds: index out of range");
  double rest = lse_rest(st, j, nullptr, nullptr, 0);
  if (rest == kNegInf) return std::numeric_limits<double>::infinity();
  return st.lp[j] - rest;
}

double exact_entropy_drift(const PosteriorState& st, const EncoderMap& enc,
                           const Dmc& dmc) {
  check_state(st, enc, dmc);
  const double h0 = entropy(st);
  double acc = 0.0;
  std::vector<double> upd(st.size());
  for (std::size_t y = 0; y < dmc.ny; ++y) {
    double hi = kNegInf;
    for (std::size_t j = 0; j < st.size(); ++j) {
      upd[j] = st.lp[j] + log_kernel(dmc, enc.x_of[j], y);
      hi = std::max(hi, upd[j]);
    }
    if (hi == kNegInf) continue;  // p(y) = 0
    double ln_py = log_sum_exp(upd);
    double hy = entropy_of_logits(upd, ln_py);
    acc += std::exp(ln_py) * (h0 - hy);
  }
  return acc;
}

namespace {

double log_entropy_drift_impl(const PosteriorState& st, const EncoderMap& enc,
                              const Dmc& dmc, bool truncated, double theta) {
  check_state(st, enc, dmc);
  const double h0 = entropy(st);
  if (h0 <= 0.0) return 0.0;  // point mass stays a point mass
  const double ln_h0 = std::log(h0);
  double acc = 0.0;
  std::vector<double> upd(st.size());
  for (std::size_t y = 0; y < dmc.ny; ++y) {
    double hi = kNegInf;
    for (std::size_t j = 0; j < st.size(); ++j) {
      upd[j] = st.lp[j] + log_kernel(dmc, enc.x_of[j], y);
      hi = std::max(hi, upd[j]);
    }
    if (hi == kNegInf) continue;
    double ln_py = log_sum_exp(upd);
    double hy = entropy_of_logits(upd, ln_py);
    double drop = (hy > 0.0) ? (ln_h0 - std::log(hy))
                             : std::numeric_limits<double>::infinity();
    if (truncated && drop < theta) continue;
    acc += std::exp(ln_py) * drop;
  }
  return acc;
}

}  // namespace

double exact_log_entropy_drift(const PosteriorState& st, const EncoderMap& enc,
                               const Dmc& dmc) {
  return log_entropy_drift_impl(st, enc, dmc, false, 0.0);
}

double exact_log_entropy_drift_truncated(const PosteriorState& st,
                                         const EncoderMap& enc, const Dmc& dmc,
                                         double theta) {
  return log_entropy_drift_impl(st, enc, dmc, true, theta);
}

double exact_z_drift_given(const PosteriorState& st, const EncoderMap& enc,
                           const Dmc& dmc, std::size_t j, std::size_t x_true) {
  check_state(st, enc, dmc);
  if (j >= st.size()) throw ConfigError("exact_z_drift: index out of range");
  if (x_true >= dmc.nx) throw ConfigError("exact_z_drift: input out of range");
  // z = lp[j] - lse_rest; both the current and updated values use the same
  // decomposition, so the predictive normalizer cancels exactly. lp[j] may
  // saturate at +0.0 when the rest mass falls below one ulp; the
  // decomposition stays well defined as long as the rest mass is nonzero.
  double rest0 = lse_rest(st, j, nullptr, nullptr, 0);
  if (rest0 == kNegInf)
    throw InvariantError("exact_z_drift: log-odds undefined at a point mass");
  const double z0 = st.lp[j] - rest0;
  double acc = 0.0;
  for (std::size_t y = 0; y < dmc.ny; ++y) {
    double w = dmc.at(x_true, y);
    if (w == 0.0) continue;
    double num = st.lp[j] + log_kernel(dmc, enc.x_of[j], y);
    double rest = lse_rest(st, j, &enc, &dmc, y);
    double zy = (rest == kNegInf) ? std::numeric_limits<double>::infinity()
                                  : num - rest;
    acc += w * (zy - z0);
  }
  return acc;
}

double exact_z_drift(const PosteriorState& st, const EncoderMap& enc,
                     const Dmc& dmc, std::size_t j) {
  if (j >= enc.size()) throw ConfigError("exact_z_drift: index out of range");
  return exact_z_drift_given(st, enc, dmc, j, enc.x_of[j]);
}

double partition_avg_z_drift(const PosteriorState& st, const Dmc& dmc,
                             std::span<const double> px, std::size_t j) {
  if (st.size() < 2) throw ConfigError("partition_avg_z_drift: need M >= 2");
  if (px.size() != dmc.nx) throw ConfigError("partition_avg_z_drift: px size mismatch");
  if (j >= st.size()) throw ConfigError("partition_avg_z_drift: index out of range");

  const std::size_t M = st.size(), nx = dmc.nx, ny = dmc.ny;
  double configs = 1.0;
  for (std::size_t k = 0; k + 1 < M; ++k) {
    configs *= static_cast<double>(nx);
    if (configs > static_cast<double>(1u << 22))
      throw ConfigError("partition_avg_z_drift: |X|^(M-1) exceeds the enumeration cap");
  }

  std::vector<double> pk;  // posteriors of the other messages
  pk.reserve(M - 1);
  for (std::size_t k = 0; k < M; ++k)
    if (k != j) pk.push_back(st.lp[k] == kNegInf ? 0.0 : std::exp(st.lp[k]));
  double one_minus_pj = 0.0;
  for (double v : pk) one_minus_pj += v;
  if (one_minus_pj <= 0.0)
    throw InvariantError("partition_avg_z_drift: log-odds undefined at a point mass");
  const double ln_rest_prior = std::log(one_minus_pj);

  // Mixed-radix enumeration of the other messages' input assignments.
  std::vector<std::size_t> a(M - 1, 0);
  std::vector<double> s_y(ny);
  double acc = 0.0;
  while (true) {
    double w_a = 1.0;
    for (std::size_t k = 0; k + 1 < M; ++k) w_a *= px[a[k]];
    if (w_a > 0.0) {
      std::fill(s_y.begin(), s_y.end(), 0.0);
      for (std::size_t k = 0; k + 1 < M; ++k)
        for (std::size_t y = 0; y < ny; ++y) s_y[y] += pk[k] * dmc.at(a[k], y);
      double inner = 0.0;
      for (std::size_t xj = 0; xj < nx; ++xj) {
        if (px[xj] == 0.0) continue;
        double e = 0.0;
        for (std::size_t y = 0; y < ny; ++y) {
          double w = dmc.at(xj, y);
          if (w == 0.0) continue;
          double dz = (s_y[y] > 0.0)
                          ? std::log(w) - std::log(s_y[y]) + ln_rest_prior
                          : std::numeric_limits<double>::infinity();
          e += w * dz;
        }
        inner += px[xj] * e;
      }
      acc += w_a * inner;
    }
    std::size_t pos = 0;
    while (pos + 1 < M && ++a[pos] == nx) a[pos++] = 0;
    if (pos + 1 >= M) break;
  }
  return acc;
}

}  // namespace vlf
