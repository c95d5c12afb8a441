// Posterior engine: Bayes updates, log-odds, entropy, exact drift laws.

#include <cmath>
#include <vector>

#include <doctest.h>

#include "vlf/channel.hpp"
#include "vlf/errors.hpp"
#include "vlf/logprob.hpp"
#include "vlf/posterior.hpp"
#include "vlf/rng.hpp"
#include "test_util.hpp"

using namespace vlf;
using namespace vlft;

namespace {

EncoderMap map_of(std::vector<std::uint32_t> xs) {
  EncoderMap e;
  e.x_of = std::move(xs);
  return e;
}

PosteriorState state_of(std::vector<double> probs) {
  PosteriorState st;
  st.lp.reserve(probs.size());
  for (double p : probs) st.lp.push_back(p > 0 ? std::log(p) : kNegInf);
  return st;
}

}  // namespace

TEST_CASE("uniform initialization") {
  PosteriorState st = init_uniform(5);
  REQUIRE(st.lp.size() == 5);
  for (double lp : st.lp)
    CHECK(lp == doctest::Approx(-std::log(5.0)).epsilon(1e-15));
  CHECK(entropy(st) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
  CHECK_THROWS_AS(init_uniform(0), ConfigError);
}

TEST_CASE("Bayes update: hand-checked two-message posterior") {
  Dmc d = bsc01();
  PosteriorState st = init_uniform(2);
  EncoderMap enc = map_of({0, 1});
  double ln_py = bayes_update(st, enc, d, 0);
  // predictive p(y=0) = 0.5*0.9 + 0.5*0.1 = 0.5; posterior [0.9, 0.1]
  CHECK(ln_py == doctest::Approx(std::log(0.5)).epsilon(1e-14));
  CHECK(std::exp(st.lp[0]) == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(std::exp(st.lp[1]) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(entropy(st) == doctest::Approx(oracle::kHbin01).epsilon(1e-14));
  CHECK(log_odds(st, 0) == doctest::Approx(std::log(9.0)).epsilon(1e-13));
  CHECK(log_odds(st, 1) == doctest::Approx(-std::log(9.0)).epsilon(1e-13));
}

TEST_CASE("Bayes update rejects impossible observations") {
  Dmc ident;
  ident.nx = 2;
  ident.ny = 2;
  ident.p = {1.0, 0.0, 0.0, 1.0};
  ident.validate_and_normalize();
  PosteriorState st = state_of({1.0, 0.0});
  EncoderMap enc = map_of({0, 1});
  CHECK_THROWS_AS(bayes_update(st, enc, ident, 1), InvariantError);
  PosteriorState ok = init_uniform(2);
  CHECK_THROWS_AS(bayes_update(ok, enc, ident, 7), ConfigError);
  EncoderMap wrong = map_of({0, 1});  // two entries against three messages
  PosteriorState three = init_uniform(3);
  CHECK_THROWS_AS(bayes_update(three, wrong, bsc01(), 0), ConfigError);
  EncoderMap oob = map_of({0, 1, 5});  // input symbol outside the alphabet
  CHECK_THROWS_AS(bayes_update(three, oob, bsc01(), 0), ConfigError);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  PosteriorState st = state_of({0.25, 0.25, 0.5});
  CHECK(argmax_lp(st) == 2);
  PosteriorState tie = init_uniform(4);
  CHECK(argmax_lp(tie) == 0);
}

TEST_CASE("log-posterior floor keeps every entry finite") {
  Dmc d = bsc01();
  PosteriorState st = init_uniform(3);
  EncoderMap enc = map_of({0, 1, 1});
  for (int i = 0; i < 5000; ++i) bayes_update(st, enc, d, 0);
  for (double lp : st.lp) {
    CHECK(std::isfinite(lp));
    CHECK(lp >= kLogPostFloor - 1e-9);
  }
}

TEST_CASE("entropy keeps relative precision at saturated states") {
  // leader snapped to +0.0 with finite rest entries: the near-point-mass
  // regime hypothesis mode reaches after ~40 nats of log-odds
  PosteriorState st;
  st.lp = {0.0, -40.0, -41.0};
  const double r = std::exp(-40.0) + std::exp(-41.0);
  const double expected = -(1.0 - r) * std::log1p(-r) + 40.0 * std::exp(-40.0) +
                          41.0 * std::exp(-41.0);
  CHECK(entropy(st) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(entropy(st) > 0.0);
  // a true point mass has zero entropy
  PosteriorState point = state_of({1.0, 0.0});
  CHECK(entropy(point) == 0.0);
}

TEST_CASE("entropy drift at a uniform binary state equals the symmetric-input "
          "mutual information") {
  Dmc d = bsc01();
  PosteriorState st = init_uniform(2);
  EncoderMap enc = map_of({0, 1});
  CHECK(exact_entropy_drift(st, enc, d) ==
        doctest::Approx(oracle::kBscC).epsilon(1e-13));
  // constant maps carry no information
  EncoderMap flat = map_of({1, 1});
  CHECK(exact_entropy_drift(st, flat, d) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("entropy drift never exceeds capacity over random states and maps") {
  Dmc channels[] = {bsc01(), asym()};
  double caps[] = {oracle::kBscC, oracle::kAsymC};
  Xoshiro256pp rng(2024);
  for (int ci = 0; ci < 2; ++ci) {
    for (int rep = 0; rep < 200; ++rep) {
      std::size_t m = 2 + rng.next() % 6;
      PosteriorState st;
      std::vector<double> w(m);
      double s = 0.0;
      for (auto& v : w) {
        v = -std::log(1.0 - rng.uniform01());
        s += v;
      }
      for (double v : w) st.lp.push_back(std::log(v / s));
      EncoderMap enc;
      for (std::size_t j = 0; j < m; ++j)
        enc.x_of.push_back(static_cast<std::uint32_t>(rng.next() % 2));
      CHECK(exact_entropy_drift(st, enc, channels[ci]) <= caps[ci] + 1e-9);
    }
  }
}

TEST_CASE("log-entropy drift: bounded by B, truncations bounded by the "
          "step-drop bound") {
  Dmc d = bsc01();
  ChannelInfo info = compute_info(d);
  // the concentrated binary hypothesis state from the desk derivation
  PosteriorState st = state_of({0.99, 0.01});
  EncoderMap enc = map_of({0, 1});
  double drift = exact_log_entropy_drift(st, enc, d);
  CHECK(drift == doctest::Approx(1.4808041616223815).epsilon(1e-12));
  CHECK(drift <= info.B + 1e-9);
  for (double mult : {0.5, 1.0, 2.0}) {
    double theta = mult * info.C2;
    double tr = exact_log_entropy_drift_truncated(st, enc, d, theta);
    CHECK(tr >= 0.0);
    CHECK(tr <= step_log_drop_bound(info, theta) + 1e-9);
  }
  // a point mass stays a point mass: drift defined as zero
  PosteriorState point = state_of({1.0, 0.0});
  CHECK(exact_log_entropy_drift(point, enc, d) == 0.0);
}

TEST_CASE("hypothesis-mode log-odds drifts are the two divergences exactly") {
  Dmc channels[] = {bsc01(), asym()};
  for (const Dmc& d : channels) {
    ChannelInfo info = compute_info(d);
    EncoderMap enc;
    enc.x_of = {static_cast<std::uint32_t>(info.x0),
                static_cast<std::uint32_t>(info.x0_prime)};
    // the drift identity is state-independent: any interior posterior works
    for (double p : {0.5, 0.9, 0.99, 0.999999}) {
      PosteriorState st = state_of({p, 1.0 - p});
      CHECK(exact_z_drift_given(st, enc, d, 0, info.x0) ==
            doctest::Approx(info.B).epsilon(1e-12));
      CHECK(exact_z_drift_given(st, enc, d, 0, info.x0_prime) ==
            doctest::Approx(-info.B_star).epsilon(1e-12));
      CHECK(exact_z_drift(st, enc, d, 0) ==
            doctest::Approx(info.B).epsilon(1e-12));
    }
  }
}

TEST_CASE("log-odds drift stays defined at a saturated leader") {
  Dmc d = bsc01();
  ChannelInfo info = compute_info(d);
  PosteriorState st;
  st.lp = {0.0, -40.0, -40.0};  // leader snapped to +0.0
  EncoderMap enc = map_of({0, 1, 1});
  CHECK(exact_z_drift_given(st, enc, d, 0, 0) ==
        doctest::Approx(info.B).epsilon(1e-12));
  // only an exact point mass (empty rest) is undefined
  PosteriorState point = state_of({1.0, 0.0});
  EncoderMap e2 = map_of({0, 1});
  CHECK_THROWS_AS(exact_z_drift_given(point, e2, d, 0, 0), InvariantError);
}

TEST_CASE("partition-ensemble drift: closed form at a uniform pair and the "
          "capacity floor") {
  Dmc d = bsc01();
  std::vector<double> px = {0.5, 0.5};
  PosteriorState st2 = init_uniform(2);
  // with one other message: drift = B when the inputs differ (prob 1/2)
  CHECK(partition_avg_z_drift(st2, d, px, 0) ==
        doctest::Approx(oracle::kBscB / 2).epsilon(1e-12));
  for (std::size_t m : {2u, 3u, 8u, 12u}) {
    PosteriorState st = init_uniform(m);
    CHECK(partition_avg_z_drift(st, d, px, 0) >= oracle::kBscC - 1e-9);
  }
  PosteriorState big = init_uniform(24);  // 2^23 assignments: over the cap
  CHECK_THROWS_AS(partition_avg_z_drift(big, d, px, 0), ConfigError);
}
