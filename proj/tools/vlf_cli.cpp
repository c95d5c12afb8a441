// Command-line front end for the variable-length feedback coding toolkit.
//
// Subcommands:
//   info         channel constants (divergences, capacity, operating regime)
//   capacity     capacity with a certified optimality gap
//   simulate     Monte-Carlo campaign over a grid of design lengths
//   md-curve     reduce a results CSV to the moderate-deviations curve
//   drift-audit  exact conditional-drift checks at scheme-reachable states
//   walk         drift random walks vs closed-form stopping-time bounds
//   audit        abort-regime length/error budget on a grid of design lengths
//   roots        the two roots of x/C = ln(x)/B + b and their ratio
//
// Exit codes: 0 success, 2 config error, 3 infeasible point,
//             4 invariant violation detected.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vlf/capacity.hpp"
#include "vlf/channel.hpp"
#include "vlf/errors.hpp"
#include "vlf/harness.hpp"
#include "vlf/martingale.hpp"
#include "vlf/scheme.hpp"
#include "vlf/stats.hpp"

namespace {

using json = nlohmann::ordered_json;

// Doubles are emitted as numbers; non-finite values as the strings used by
// the CSV writer ("nan", "inf", "-inf") so downstream JSON parsers never see
// bare NaN/Infinity tokens.
json jnum(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

vlf::Dmc load_channel(const std::string& path) {
  return vlf::Dmc::from_json_file(path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw vlf::ConfigError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw vlf::ConfigError("cannot write file: " + path);
  out << text;
}

std::string file_stem(const std::string& path) {
  auto slash = path.find_last_of("/\\");
  std::string base = (slash == std::string::npos) ? path : path.substr(slash + 1);
  auto dot = base.find_last_of('.');
  if (dot != std::string::npos && dot > 0) base = base.substr(0, dot);
  return base.empty() ? "inline" : base;
}

int cmd_info(const std::string& channel_path, double tol) {
  vlf::Dmc dmc = load_channel(channel_path);
  vlf::ChannelInfo info = vlf::compute_info(dmc);
  vlf::CapacityResult cap = vlf::capacity(dmc, tol);
  json out;
  out["nx"] = dmc.nx;
  out["ny"] = dmc.ny;
  out["B"] = jnum(info.B);
  out["B_star"] = jnum(info.B_star);
  out["C2"] = jnum(info.C2);
  out["T"] = jnum(info.T);
  out["finite_B"] = info.finite_B;
  out["x0"] = info.x0;
  out["x0_prime"] = info.x0_prime;
  out["C_nats"] = jnum(cap.C);
  out["C_bits"] = jnum(cap.C / std::log(2.0));
  out["B_over_C"] = jnum(cap.C > 0 ? info.B / cap.C : 0.0);
  out["regime"] =
      std::string(vlf::to_string(info.B_star > cap.C ? vlf::Regime::NoAbort
                                                     : vlf::Regime::AbortRetx));
  json px = json::array();
  for (double v : cap.px) px.push_back(jnum(v));
  out["px_star"] = std::move(px);
  out["capacity_gap"] = jnum(cap.gap);
  out["capacity_iterations"] = cap.iterations;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_capacity(const std::string& channel_path, double tol,
                 std::size_t max_iter) {
  vlf::Dmc dmc = load_channel(channel_path);
  vlf::CapacityResult cap = vlf::capacity(dmc, tol, max_iter);
  json out;
  out["C_nats"] = jnum(cap.C);
  out["C_bits"] = jnum(cap.C / std::log(2.0));
  json px = json::array();
  for (double v : cap.px) px.push_back(jnum(v));
  out["px_star"] = std::move(px);
  out["gap"] = jnum(cap.gap);
  out["iterations"] = cap.iterations;
  out["converged"] = cap.converged;
  std::cout << out.dump(2) << "\n";
  return 0;
}

struct SimulateArgs {
  std::string channel;
  std::vector<double> n_grid;
  std::string rho = "pow:0.3333333333333333";
  std::size_t M = 0;  // 0: couple M to the design rate
  std::size_t m_cap = 1u << 20;
  std::size_t trials = 100000;
  std::string mode = "calibrated";
  double const_q = 0.0;
  std::uint64_t seed = 1;
  std::string out = "results.csv";
  std::string jsonl;
  std::size_t threads = 0;
  std::size_t calib_trials = 0;
  double calib_tol = 0.002;
  double n_max_mult = 50.0;
  std::string force_regime;
  double capacity_tol = 1e-9;
};

int cmd_simulate(const SimulateArgs& a) {
  vlf::CampaignConfig cfg;
  cfg.dmc = load_channel(a.channel);
  cfg.channel_name = file_stem(a.channel);
  cfg.n_grid = a.n_grid;
  cfg.rho = vlf::RhoFamily::parse(a.rho);
  cfg.m_fixed = a.M;
  cfg.m_cap = a.m_cap;
  cfg.mode = (a.mode == "theory") ? vlf::ThresholdMode::Theory
                                  : vlf::ThresholdMode::Calibrated;
  if (!a.force_regime.empty())
    cfg.force_regime = (a.force_regime == "no-abort") ? vlf::Regime::NoAbort
                                                      : vlf::Regime::AbortRetx;
  cfg.const_q = a.const_q;
  cfg.trials = a.trials;
  cfg.seed = a.seed;
  cfg.threads = a.threads;
  cfg.calib_trials = a.calib_trials;
  cfg.calib_tol = a.calib_tol;
  cfg.n_max_mult = a.n_max_mult;
  cfg.capacity_tol = a.capacity_tol;

  vlf::CampaignResult res = vlf::run_campaign(cfg);
  for (const std::string& d : res.diagnostics) std::cerr << d << "\n";

  bool fano_ok = true;
  for (const vlf::PointSummary& p : res.points) {
    double ci_pe = p.pe_hi - p.pe_hat;
    bool fano = vlf::fano_check(p.mean_h, p.h_ci, p.pe_hat, ci_pe, p.M);
    fano_ok = fano_ok && fano;
    std::printf(
        "N=%g M=%zu regime=%s mean_tau=%.4f pe=%.3g md_ratio_eff=%.4f "
        "aborts=%zu fano=%s\n",
        p.N, p.M, vlf::to_string(p.regime), p.mean_tau, p.pe_hat,
        p.md_ratio_eff, p.aborts, fano ? "ok" : "VIOLATED");
  }

  write_file(a.out, vlf::to_csv(res.points));
  std::printf("wrote %s (%zu points)\n", a.out.c_str(), res.points.size());
  if (!a.jsonl.empty()) {
    write_file(a.jsonl, vlf::to_jsonl(res.points));
    std::printf("wrote %s\n", a.jsonl.c_str());
  }
  if (!fano_ok) {
    std::cerr << "error-vs-entropy consistency check failed on a completed "
                 "point\n";
    return 4;
  }
  return res.exit_code;
}

int cmd_md_curve(const std::string& in_path, const std::string& out_path) {
  std::string curve = vlf::md_curve_csv(read_file(in_path));
  if (out_path.empty()) {
    std::cout << curve;
  } else {
    write_file(out_path, curve);
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

int cmd_drift_audit(const std::string& channel_path,
                    const vlf::DriftAuditConfig& cfg) {
  vlf::Dmc dmc = load_channel(channel_path);
  vlf::DriftAuditResult r = vlf::drift_audit(dmc, cfg);
  json out;
  out["states_audited"] = r.states_audited;
  out["partition_states"] = r.partition_states;
  out["hypothesis_states"] = r.hypothesis_states;
  out["step_checks"] = r.step_checks;
  out["max_entropy_drift_excess"] = jnum(r.max_entropy_drift_excess);
  out["max_log_drift_excess"] = jnum(r.max_log_drift_excess);
  out["max_trunc_excess"] = jnum(r.max_trunc_excess);
  out["worst_z_true_gap"] = jnum(r.worst_z_true_gap);
  out["worst_z_false_gap"] = jnum(r.worst_z_false_gap);
  out["min_partition_margin"] = jnum(r.min_partition_margin);
  out["partition_checked"] = r.partition_checked;
  out["max_step_jump_excess"] = jnum(r.max_step_jump_excess);
  out["tol"] = jnum(cfg.tol);
  out["ok"] = r.ok;
  std::cout << out.dump(2) << "\n";
  if (!r.ok) {
    std::cerr << "drift audit: a conditional-drift bound was violated\n";
    return 4;
  }
  return 0;
}

struct WalkArgs {
  std::string regime;
  std::string law = "two-point";
  vlf::DriftWalkSpec spec;
  std::size_t trials = 100000;
  std::uint64_t seed = 1;
  long long max_steps = 10'000'000;
};

int cmd_walk(WalkArgs& a) {
  if (a.regime == "single-up") a.spec.regime = vlf::WalkRegime::SingleUp;
  else if (a.regime == "up-then-down") a.spec.regime = vlf::WalkRegime::UpThenDown;
  else if (a.regime == "up-then-up") a.spec.regime = vlf::WalkRegime::UpThenUp;
  else throw vlf::ConfigError("walk: unknown regime '" + a.regime + "'");
  if (a.law == "two-point") a.spec.law = vlf::StepLaw::TwoPoint;
  else if (a.law == "trunc-uniform") a.spec.law = vlf::StepLaw::TruncUniform;
  else throw vlf::ConfigError("walk: unknown step law '" + a.law + "'");

  vlf::WalkStats s = vlf::simulate_stopping(a.spec, a.trials, a.seed, a.max_steps);
  json out;
  out["regime"] = std::string(vlf::to_string(a.spec.regime));
  out["law"] = std::string(vlf::to_string(a.spec.law));
  out["k1"] = jnum(a.spec.K1);
  out["k2"] = jnum(a.spec.K2);
  out["k3"] = jnum(a.spec.K3);
  out["T0"] = jnum(a.spec.T0);
  out["T"] = jnum(a.spec.T);
  out["xi0"] = jnum(a.spec.xi0);
  out["trials"] = s.trials;
  out["mean"] = jnum(s.mean);
  out["sd"] = jnum(s.sd);
  out["ci95_half"] = jnum(s.ci95_half);
  out["bound"] = jnum(s.bound);
  out["mean_tau0"] = jnum(s.mean_tau0);
  out["guard_hits"] = s.guard_hits;
  out["mean_within_bound"] = s.mean <= s.bound + 3.0 * s.ci95_half;
  std::cout << out.dump(2) << "\n";
  if (s.guard_hits > 0)
    std::cerr << "warning: " << s.guard_hits
              << " trials hit the step guard and were excluded\n";
  return 0;
}

int cmd_audit(const std::string& channel_path, const std::vector<double>& l_grid,
              const std::string& rho_text, double const_q) {
  vlf::Dmc dmc = load_channel(channel_path);
  vlf::ChannelInfo info = vlf::compute_info(dmc);
  vlf::CapacityResult cap = vlf::capacity(dmc);
  info.C = cap.C;
  info.px_star = cap.px;
  vlf::RhoFamily fam = vlf::RhoFamily::parse(rho_text);

  json rows = json::array();
  bool all_feasible = true, all_within = true;
  for (double L : l_grid) {
    vlf::ScheduleAudit r = vlf::audit_schedule(info, L, fam(L), const_q);
    json row;
    row["L"] = jnum(r.L);
    row["rho_prime"] = jnum(r.rho_prime);
    row["p0L"] = jnum(r.p0L);
    row["z0L"] = jnum(r.z0L);
    row["aL"] = jnum(r.aL);
    row["log_eps"] = jnum(r.log_eps);
    row["p1_hi"] = jnum(r.p1_hi);
    row["ewl"] = jnum(r.ewl);
    row["ewl_budget"] = jnum(r.ewl_budget);
    row["within_budget"] = r.feasible && r.ewl <= r.ewl_budget;
    row["md_ratio"] = jnum(r.md_ratio);
    row["feasible"] = r.feasible;
    row["note"] = r.note;
    rows.push_back(std::move(row));
    all_feasible = all_feasible && r.feasible;
    all_within = all_within && r.feasible && r.ewl <= r.ewl_budget;
  }
  json out;
  out["B"] = jnum(info.B);
  out["B_star"] = jnum(info.B_star);
  out["C_nats"] = jnum(cap.C);
  out["B_over_C"] = jnum(info.B / cap.C);
  out["rho_family"] = fam.str();
  out["const_q"] = jnum(const_q);
  out["rows"] = std::move(rows);
  out["all_feasible"] = all_feasible;
  out["all_within_budget"] = all_within;
  std::cout << out.dump(2) << "\n";
  return all_feasible ? 0 : 3;
}

int cmd_roots(double B, double C, double b) {
  vlf::ConverseRoots r = vlf::converse_roots(B, C, b);
  json out;
  out["B"] = jnum(B);
  out["C"] = jnum(C);
  out["b"] = jnum(b);
  out["b_critical"] = jnum((1.0 - std::log(C / B)) / B);
  out["a"] = jnum(r.a);
  out["A"] = jnum(r.A);
  out["ratio"] = jnum(r.ratio);
  out["resid_a"] = jnum(r.resid_a);
  out["resid_A"] = jnum(r.resid_A);
  out["tangent"] = r.tangent;
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Variable-length feedback coding over discrete memoryless channels: "
      "simulator and verification toolkit"};
  app.require_subcommand(1);

  // info
  std::string info_channel;
  double info_tol = 1e-9;
  auto* info_cmd =
      app.add_subcommand("info", "Channel constants and operating regime");
  info_cmd->add_option("channel", info_channel, "Channel JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  info_cmd->add_option("--tol", info_tol, "Capacity optimality-gap tolerance");

  // capacity
  std::string cap_channel;
  double cap_tol = 1e-9;
  std::size_t cap_max_iter = 200000;
  auto* cap_cmd =
      app.add_subcommand("capacity", "Capacity with a certified gap");
  cap_cmd->add_option("channel", cap_channel, "Channel JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  cap_cmd->add_option("--tol", cap_tol, "Optimality-gap tolerance");
  cap_cmd->add_option("--max-iter", cap_max_iter, "Iteration cap");

  // simulate
  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand(
      "simulate", "Monte-Carlo campaign over a grid of design lengths");
  sim_cmd->add_option("--channel", sim.channel, "Channel JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  sim_cmd
      ->add_option("--N-grid", sim.n_grid,
                   "Design lengths (mean decision-time targets)")
      ->required()
      ->delimiter(',');
  sim_cmd->add_option(
      "--rho", sim.rho,
      "Backoff family: pow:s for N^-s, const:c for a constant");
  sim_cmd->add_option(
      "--M", sim.M,
      "Message count; 0 couples M to the design rate exp(N(C-rho))");
  sim_cmd->add_option("--m-cap", sim.m_cap,
                      "Upper bound on the coupled message count");
  sim_cmd->add_option("--trials", sim.trials, "Trials per design point");
  sim_cmd->add_option("--mode", sim.mode, "Threshold mode")
      ->check(CLI::IsMember({"theory", "calibrated"}));
  sim_cmd->add_option("--const-q", sim.const_q,
                      "Additive constant in the acceptance threshold");
  sim_cmd->add_option("--seed", sim.seed, "Master seed");
  sim_cmd->add_option("--out", sim.out, "Results CSV path");
  sim_cmd->add_option("--jsonl", sim.jsonl, "Optional JSON-lines path");
  sim_cmd->add_option("--threads", sim.threads,
                      "Worker count; 0 defers to VLF_THREADS, then hardware");
  sim_cmd->add_option("--calib-trials", sim.calib_trials,
                      "Calibration trials per evaluation; 0 uses --trials");
  sim_cmd->add_option("--calib-tol", sim.calib_tol,
                      "Relative tolerance on the calibrated mean decision time");
  sim_cmd->add_option("--n-max-mult", sim.n_max_mult,
                      "Safety horizon as a multiple of N");
  sim_cmd->add_option("--force-regime", sim.force_regime,
                      "Override the regime selection")
      ->check(CLI::IsMember({"no-abort", "abort-retx"}));
  sim_cmd->add_option("--capacity-tol", sim.capacity_tol,
                      "Capacity optimality-gap tolerance");

  // md-curve
  std::string md_in, md_out;
  auto* md_cmd = app.add_subcommand(
      "md-curve", "Reduce a results CSV to the moderate-deviations curve");
  md_cmd->add_option("--in", md_in, "Results CSV from simulate")
      ->required()
      ->check(CLI::ExistingFile);
  md_cmd->add_option("--out", md_out, "Curve CSV path (default: stdout)");

  // drift-audit
  std::string da_channel;
  vlf::DriftAuditConfig da_cfg;
  bool da_skip_partition = false;
  auto* da_cmd = app.add_subcommand(
      "drift-audit",
      "Exact conditional-drift checks at scheme-reachable posterior states");
  da_cmd->add_option("--channel", da_channel, "Channel JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  da_cmd->add_option("--states", da_cfg.states, "Posterior states to audit");
  da_cmd->add_option("--M", da_cfg.M, "Message count of the audited scheme");
  da_cmd->add_option("--N", da_cfg.N, "Design length of the audited scheme");
  da_cmd->add_option("--seed", da_cfg.seed, "Master seed");
  da_cmd->add_option("--tol", da_cfg.tol, "Violation tolerance");
  da_cmd->add_flag("--skip-partition", da_skip_partition,
                   "Skip the partition-ensemble drift check");

  // walk
  WalkArgs walk;
  auto* walk_cmd = app.add_subcommand(
      "walk", "Drift random walk vs the closed-form stopping-time bound");
  walk_cmd->add_option("--regime", walk.regime, "Walk shape")
      ->required()
      ->check(CLI::IsMember({"single-up", "up-then-down", "up-then-up"}));
  walk_cmd->add_option("--law", walk.law, "Step law")
      ->check(CLI::IsMember({"two-point", "trunc-uniform"}));
  walk_cmd->add_option("--k1", walk.spec.K1, "First-leg drift");
  walk_cmd->add_option("--k2", walk.spec.K2, "Second-leg drift magnitude");
  walk_cmd->add_option("--k3", walk.spec.K3, "Step magnitude bound");
  walk_cmd->add_option("--T0", walk.spec.T0, "Leg-switch level");
  walk_cmd->add_option("--T", walk.spec.T, "Stopping level");
  walk_cmd->add_option("--xi0", walk.spec.xi0, "Starting point");
  walk_cmd->add_option("--trials", walk.trials, "Trials");
  walk_cmd->add_option("--seed", walk.seed, "Master seed");
  walk_cmd->add_option("--max-steps", walk.max_steps,
                       "Per-trial step guard (excluded from the mean)");

  // audit
  std::string au_channel, au_rho = "pow:0.3333333333333333";
  std::vector<double> au_grid;
  double au_const_q = 0.0;
  auto* au_cmd = app.add_subcommand(
      "audit", "Abort-regime length/error budget on a grid of design lengths");
  au_cmd->add_option("--channel", au_channel, "Channel JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  au_cmd->add_option("--L-grid", au_grid, "Design lengths")
      ->required()
      ->delimiter(',');
  au_cmd->add_option("--rho", au_rho,
                     "Backoff family evaluated at L: pow:s or const:c");
  au_cmd->add_option("--const-q", au_const_q,
                     "Additive constant in the acceptance threshold");

  // roots
  double rt_B = 0.0, rt_C = 0.0, rt_b = 0.0;
  auto* rt_cmd = app.add_subcommand(
      "roots", "Roots of x/C = ln(x)/B + b and their ratio");
  rt_cmd->add_option("--B", rt_B, "Divergence constant B")->required();
  rt_cmd->add_option("--C", rt_C, "Capacity C")->required();
  rt_cmd->add_option("--b", rt_b, "Affine offset b")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*info_cmd) return cmd_info(info_channel, info_tol);
    if (*cap_cmd) return cmd_capacity(cap_channel, cap_tol, cap_max_iter);
    if (*sim_cmd) return cmd_simulate(sim);
    if (*md_cmd) return cmd_md_curve(md_in, md_out);
    if (*da_cmd) {
      da_cfg.check_partition_ensemble = !da_skip_partition;
      return cmd_drift_audit(da_channel, da_cfg);
    }
    if (*walk_cmd) return cmd_walk(walk);
    if (*au_cmd) return cmd_audit(au_channel, au_grid, au_rho, au_const_q);
    if (*rt_cmd) return cmd_roots(rt_B, rt_C, rt_b);
  } catch (const vlf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const vlf::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 3;
  } catch (const vlf::InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
