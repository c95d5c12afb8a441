#pragma once

// Campaign driver: sweeps design lengths, assembles scheme parameters,
// (optionally) calibrates the acceptance threshold to hit the target mean
// decision time, runs the Monte-Carlo trials and reduces them into one
// summary row per design point. Output is deterministic in the
// configuration, independent of the worker count.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vlf/channel.hpp"
#include "vlf/scheme.hpp"

namespace vlf {

// Backoff family rho(N): "pow:s" gives N^-s, "const:c" gives the constant c.
// The moderate-deviations conditions (rho -> 0, rho * sqrt(N) -> infinity)
// hold for pow with s in (0, 1/2); anything else is flagged as relaxed.
struct RhoFamily {
  enum class Kind { Pow, Const };
  Kind kind = Kind::Pow;
  double param = 1.0 / 3.0;

  double operator()(double N) const;
  bool relaxed() const;
  std::string str() const;
  static RhoFamily parse(const std::string& text);  // throws ConfigError
};

struct CampaignConfig {
  Dmc dmc;
  std::string channel_name = "inline";
  std::vector<double> n_grid;
  RhoFamily rho;
  std::size_t m_fixed = 0;  // 0: couple M to the design rate C - rho(N)
  std::size_t m_cap = 1u << 20;
  ThresholdMode mode = ThresholdMode::Calibrated;
  std::optional<Regime> force_regime;
  double const_q = 0.0;
  std::size_t trials = 100000;
  std::uint64_t seed = 1;
  std::size_t threads = 0;       // 0: VLF_THREADS env, else hardware
  std::size_t calib_trials = 0;  // 0: same as trials
  double calib_tol = 0.002;
  double n_max_mult = 50.0;
  double capacity_tol = 1e-9;

  std::string config_string() const;  // canonical form (worker count excluded)
  std::uint64_t config_hash() const;  // FNV-1a 64 of config_string()
};

struct PointSummary {
  std::string channel;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  ThresholdMode mode = ThresholdMode::Calibrated;
  Regime regime = Regime::NoAbort;
  double N = 0.0;
  double rho_n = 0.0;
  std::size_t M = 0;
  double rate = 0.0;     // ln(M) / N
  double rho_eff = 0.0;  // C - ln(M) / N
  double L = 0.0;
  double rho_prime = 0.0;
  double p0 = 0.0;
  double z_enter = 0.0;
  double z_accept = 0.0;
  double z_abort = 0.0;
  double const_q = 0.0;
  std::size_t trials = 0;
  std::size_t errors = 0;
  std::size_t aborts = 0;
  double pe_hat = 0.0, pe_lo = 0.0, pe_hi = 0.0;
  bool pe_zero = false;
  double ln_pe_post = 0.0;  // ln of the mean posterior error mass at decision
  double pe_post = 0.0;     // exp(ln_pe_post); may underflow to 0
  double md_ratio = 0.0;    // -ln(pe) / (N rho_n), counting estimate
  bool md_is_lower = false; // counting estimate used the 3/n bound
  double md_ratio_eff = 0.0;  // -ln_pe_post / (N (C - ln(M)/N))
  double md_eff_ci = 0.0;     // batch-means 95% half-width on md_ratio_eff
  double mean_tau = 0.0, tau_ci = 0.0;
  double attempts_mean = 0.0;
  double phase1_mean = 0.0, phase2_mean = 0.0;
  double mean_h = 0.0, h_ci = 0.0;
  bool relaxed_rho = false;
  bool mean_tau_gt_n = false;
  int calib_evals = 0;
  double B = 0.0, B_star = 0.0, C = 0.0, C2 = 0.0, B_over_C = 0.0;
  double wall_ms = 0.0;  // reported in JSONL only, never in the CSV
};

struct CampaignResult {
  std::vector<PointSummary> points;
  std::vector<std::string> diagnostics;  // skipped / infeasible design points
  int exit_code = 0;                     // 0 all points ran, 3 some skipped
};

CampaignResult run_campaign(const CampaignConfig& config);

// Fixed-order CSV serialization of the summary rows (see README for the
// column list). Excludes wall-clock time so repeated runs are byte-identical.
std::string to_csv(const std::vector<PointSummary>& points);

// One JSON object per line; includes wall_ms.
std::string to_jsonl(const std::vector<PointSummary>& points);

// Reduces a results CSV (as produced by to_csv) to the moderate-deviations
// curve: N, backoff, message count, both ratio estimates and the channel
// constant they approach.
std::string md_curve_csv(const std::string& results_csv);

// Deterministic shortest-round-trip formatting used by the writers.
std::string fmt_double(double v);

// Drift audit: runs instrumented transmissions and, at every reached
// posterior state, checks the exact conditional-drift laws against their
// channel constants --
//   entropy drift        <= C            (any encoder map)
//   log-entropy drift    <= B            (finite-B channels)
//   truncated log drop   <= its bound    (theta in {0.5, 1, 2} x C2)
//   hypothesis log-odds  drift = B under the true hypothesis,
//                        -B_star under a false one (exact identities)
//   partition ensemble   log-odds drift of the true message >= C
//   one-step log-odds    jumps bounded by C2, for every message and output
struct DriftAuditConfig {
  std::size_t states = 10000;  // posterior states to audit
  std::size_t M = 12;
  double N = 60.0;  // design point used to generate reachable states
  std::uint64_t seed = 7;
  double tol = 1e-9;
  // The ensemble check enumerates nx^(M-1) partitions; it is skipped
  // automatically when that exceeds the enumeration cap.
  bool check_partition_ensemble = true;
};

struct DriftAuditResult {
  std::size_t states_audited = 0;
  std::size_t partition_states = 0;
  std::size_t hypothesis_states = 0;
  std::size_t step_checks = 0;  // (state, output, message) jump checks
  double max_entropy_drift_excess = 0.0;    // max(drift - C), clamped at 0
  double max_log_drift_excess = 0.0;        // max(drift - B)
  double max_trunc_excess = 0.0;            // worst theta
  double worst_z_true_gap = 0.0;            // max |drift - B| at hyp states
  double worst_z_false_gap = 0.0;           // max |drift + B_star|
  double min_partition_margin = 0.0;        // min(drift - C) over ensemble checks
  double max_step_jump_excess = 0.0;        // max(|jump| - C2)
  bool partition_checked = false;
  bool ok = false;
};

DriftAuditResult drift_audit(const Dmc& dmc, const DriftAuditConfig& cfg);

}  // namespace vlf
