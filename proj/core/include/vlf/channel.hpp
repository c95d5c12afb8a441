#pragma once

// Discrete memoryless channel: transition kernel plus the divergence
// quantities that drive the variable-length scheme and its analysis.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vlf {

struct Dmc {
  std::size_t nx = 0;  // inputs
  std::size_t ny = 0;  // outputs
  std::vector<double> p;  // row-major nx*ny; each row a distribution over outputs
  std::vector<std::string> labels_in;   // optional
  std::vector<std::string> labels_out;  // optional

  double at(std::size_t x, std::size_t y) const { return p[x * ny + y]; }
  std::span<const double> row(std::size_t x) const { return {p.data() + x * ny, ny}; }

  // Throws ConfigError on shape problems, negative entries, or rows that do
  // not sum to 1 within 1e-12. Rows are renormalized exactly afterwards.
  void validate_and_normalize();

  static Dmc from_json(const std::string& text);
  static Dmc from_json_file(const std::string& path);
  std::string to_json() const;

  static Dmc bsc(double crossover);
};

// KL divergence D(p||q) in nats; +inf when p charges a q-null output.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct ChannelInfo {
  // Largest ordered-pair divergence between rows and its reverse direction.
  double B = 0.0;
  double B_star = 0.0;
  // Largest |log likelihood ratio| over entries positive on both sides, and
  // the largest single-entry likelihood ratio (+inf if supports differ).
  double C2 = 0.0;
  double T = 1.0;
  bool finite_B = true;
  // Lexicographically first ordered pair attaining B.
  std::size_t x0 = 0;
  std::size_t x0_prime = 0;
  // Capacity data; NaN/empty until a capacity solve fills them in.
  double C = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> px_star;

  bool has_capacity() const { return !std::isnan(C); }
  std::string to_json() const;
};

// Scans all ordered row pairs. For a single-input channel B = B_star = 0,
// T = 1, C2 = 0. B_star is the largest reverse divergence among pairs tying
// for B (relative tie tolerance 1e-12).
ChannelInfo compute_info(const Dmc& dmc);

// Bound on the one-step drop of the log posterior entropy, truncated at
// theta: ln T when ln T >= theta, else 0 (0 also when T is infinite only if
// theta is +inf; infinite T yields +inf for finite theta).
double step_log_drop_bound(const ChannelInfo& info, double theta);

}  // namespace vlf
