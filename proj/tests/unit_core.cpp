// Log-domain arithmetic, deterministic RNG streams, and estimation helpers.

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include <doctest.h>

#include "vlf/errors.hpp"
#include "vlf/logprob.hpp"
#include "vlf/rng.hpp"
#include "vlf/stats.hpp"

using namespace vlf;

TEST_CASE("log-domain primitives match their closed forms") {
  CHECK(log_add(std::log(0.3), std::log(0.2)) ==
        doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(log_add(kNegInf, std::log(0.7)) ==
        doctest::Approx(std::log(0.7)).epsilon(1e-15));
  CHECK(log_add(kNegInf, kNegInf) == kNegInf);

  std::vector<double> v = {std::log(0.1), std::log(0.2), std::log(0.7)};
  CHECK(log_sum_exp(v) == doctest::Approx(0.0).epsilon(1e-14));
  std::vector<double> empty_like = {kNegInf, kNegInf};
  CHECK(log_sum_exp(empty_like) == kNegInf);

  // log1pexp: ln(1 + e^x) across the piecewise-regime boundaries
  for (double x : {-800.0, -40.0, -1.0, 0.0, 1.0, 30.0, 50.0, 800.0}) {
    double direct = (x > 700) ? x : std::log1p(std::exp(x));
    CHECK(log1pexp(x) == doctest::Approx(direct).epsilon(1e-14));
  }

  // log1mexp: ln(1 - e^x) for x < 0
  CHECK(log1mexp(-1e-18) == doctest::Approx(std::log(1e-18)).epsilon(1e-9));
  CHECK(log1mexp(-50.0) == doctest::Approx(-std::exp(-50.0)).epsilon(1e-9));

  // log_sigmoid(z) = -log1pexp(-z); sigmoid pair sums to one
  for (double z : {-30.0, -2.0, 0.0, 2.0, 30.0}) {
    CHECK(std::exp(log_sigmoid(z)) + std::exp(log_sigmoid(-z)) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  // stays finite far past the linear-domain underflow point; on the positive
  // side the true value -e^(-1400) rounds to the zero below it
  CHECK(log_sigmoid(-1400.0) == doctest::Approx(-1400.0).epsilon(1e-12));
  CHECK(log_sigmoid(1400.0) <= 0.0);
  CHECK(log_sigmoid(700.0) <= 0.0);
  CHECK(log_sigmoid(36.0) < 0.0);

  CHECK(hbin(0.0) == 0.0);
  CHECK(hbin(1.0) == 0.0);
  CHECK(hbin(0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(hbin(0.1) == doctest::Approx(0.32508297339144825).epsilon(1e-15));
}

TEST_CASE("xoshiro: determinism, range, and coarse uniformity") {
  Xoshiro256pp a(12345), b(12345), c(54321);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    std::uint64_t va = a.next();
    all_equal = all_equal && (va == b.next());
    any_diff = any_diff || (va != c.next());
  }
  CHECK(all_equal);
  CHECK(any_diff);

  Xoshiro256pp r(7);
  double mn = 1.0, mx = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform01();
    mn = std::min(mn, u);
    mx = std::max(mx, u);
    sum += u;
  }
  CHECK(mn >= 0.0);
  CHECK(mx < 1.0);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("categorical sampling matches the weights") {
  Xoshiro256pp r(99);
  std::vector<double> probs = {0.1, 0.6, 0.3};
  std::vector<int> count(3, 0);
  const int n = 300000;
  for (int i = 0; i < n; ++i) count[sample_categorical(r, probs)]++;
  for (int k = 0; k < 3; ++k)
    CHECK(static_cast<double>(count[k]) / n ==
          doctest::Approx(probs[k]).epsilon(0.03));

  // the tail slot absorbs rounding: degenerate weights still return an index
  std::vector<double> point = {0.0, 0.0, 1.0};
  for (int i = 0; i < 100; ++i) CHECK(sample_categorical(r, point) == 2);
}

TEST_CASE("stream derivation separates trials, attempts, and purposes") {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t trial = 0; trial < 10; ++trial)
    for (std::uint64_t attempt = 0; attempt < 4; ++attempt)
      for (std::uint64_t purpose : {kStreamNoise, kStreamPartition,
                                    kStreamMessage, kStreamWalk})
        seeds.insert(stream_seed(42, trial, attempt, purpose));
  CHECK(seeds.size() == 10u * 4u * 4u);
  CHECK(stream_seed(42, 1, 0, kStreamNoise) ==
        stream_seed(42, 1, 0, kStreamNoise));
  CHECK(stream_seed(42, 1, 0, kStreamNoise) !=
        stream_seed(43, 1, 0, kStreamNoise));
}

TEST_CASE("error-rate estimate: Wilson interval and the zero-failure bound") {
  PeEstimate e = estimate_pe(100, 10000);
  CHECK(e.p == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(e.lo == doctest::Approx(0.0082293361481484174).epsilon(1e-12));
  CHECK(e.hi == doctest::Approx(0.012146982255114645).epsilon(1e-12));
  CHECK_FALSE(e.zero);

  PeEstimate z = estimate_pe(0, 2000);
  CHECK(z.zero);
  CHECK(z.lo == 0.0);
  CHECK(z.hi == doctest::Approx(0.0015).epsilon(1e-15));

  PeEstimate full = estimate_pe(5, 5);
  CHECK(full.hi <= 1.0);
  CHECK(full.lo <= full.p);

  CHECK_THROWS_AS(estimate_pe(1, 0), ConfigError);
  CHECK_THROWS_AS(estimate_pe(3, 2), ConfigError);
}

TEST_CASE("running mean matches direct two-pass statistics") {
  RunningMean rm;
  std::vector<double> xs = {1.5, -2.0, 0.25, 4.0, 4.0, -1.0};
  double s = 0.0;
  for (double x : xs) {
    rm.add(x);
    s += x;
  }
  double mean = s / xs.size();
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  CHECK(rm.n == xs.size());
  CHECK(rm.mean == doctest::Approx(mean).epsilon(1e-15));
  CHECK(rm.variance() == doctest::Approx(ss / (xs.size() - 1)).epsilon(1e-14));
  CHECK(rm.ci95_half() ==
        doctest::Approx(kZ95 * rm.sd() / std::sqrt(double(xs.size())))
            .epsilon(1e-14));
}

TEST_CASE("error types map onto the exit-code contract") {
  CHECK_THROWS_AS(throw ConfigError("x"), std::runtime_error);
  CHECK_THROWS_AS(throw InfeasibleError("x"), std::runtime_error);
  CHECK_THROWS_AS(throw InvariantError("x"), std::runtime_error);
}
