// Microbenchmarks for the hot paths: posterior updates, log-domain
// reductions, full transmissions (direct and reference engines), the
// capacity solver and the drift-walk sampler.

#include <cmath>
#include <vector>

#include <benchmark/benchmark.h>

#include "vlf/capacity.hpp"
#include "vlf/channel.hpp"
#include "vlf/logprob.hpp"
#include "vlf/martingale.hpp"
#include "vlf/posterior.hpp"
#include "vlf/rng.hpp"
#include "vlf/scheme.hpp"

using namespace vlf;

namespace {

Dmc bsc01() { return Dmc::bsc(0.1); }

SchemeParams params_for(const Dmc& d, std::size_t M, double N) {
  ChannelInfo info = compute_info(d);
  CapacityResult cap = capacity(d);
  info.C = cap.C;
  info.px_star = cap.px;
  return make_scheme_params(d, info, M, N, std::pow(N, -1.0 / 3.0),
                            ThresholdMode::Theory, 0.0);
}

void BM_LogSumExp(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<double> v(n);
  Xoshiro256pp rng(1);
  for (double& x : v) x = -50.0 * rng.uniform01();
  for (auto _ : state) benchmark::DoNotOptimize(log_sum_exp(v));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n));
}

void BM_BayesUpdate(benchmark::State& state) {
  const std::size_t M = static_cast<std::size_t>(state.range(0));
  Dmc d = bsc01();
  PosteriorState st = init_uniform(M);
  EncoderMap enc;
  enc.x_of.resize(M);
  Xoshiro256pp rng(2);
  for (std::size_t j = 0; j < M; ++j)
    enc.x_of[j] = static_cast<std::uint32_t>(rng.next() & 1u);
  std::uint32_t y = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bayes_update(st, enc, d, y));
    y ^= 1u;
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(M));
}

void BM_Trial(benchmark::State& state) {
  Dmc d = bsc01();
  SchemeParams p = params_for(d, 16, 100.0);
  std::uint64_t t = 0;
  long long steps = 0;
  for (auto _ : state) {
    TrialOutcome o = run_trial(d, p, 3, t++);
    steps += o.tau;
    benchmark::DoNotOptimize(o);
  }
  state.SetItemsProcessed(steps);  // channel uses per second
}

void BM_TrialReference(benchmark::State& state) {
  Dmc d = bsc01();
  SchemeParams p = params_for(d, 16, 100.0);
  std::uint64_t t = 0;
  long long steps = 0;
  for (auto _ : state) {
    TrialOutcome o = run_trial_instrumented(d, p, 3, t++);
    steps += o.tau;
    benchmark::DoNotOptimize(o);
  }
  state.SetItemsProcessed(steps);
}

void BM_Capacity(benchmark::State& state) {
  Xoshiro256pp rng(4);
  Dmc d;
  d.nx = 4;
  d.ny = 4;
  d.p.assign(16, 0.0);
  for (std::size_t x = 0; x < 4; ++x) {
    double s = 0.0;
    for (std::size_t y = 0; y < 4; ++y) {
      d.p[x * 4 + y] = -std::log(1.0 - rng.uniform01());
      s += d.p[x * 4 + y];
    }
    for (std::size_t y = 0; y < 4; ++y) d.p[x * 4 + y] /= s;
  }
  d.validate_and_normalize();
  for (auto _ : state) benchmark::DoNotOptimize(capacity(d, 1e-9));
}

void BM_WalkTrial(benchmark::State& state) {
  DriftWalkSpec s;
  s.regime = WalkRegime::UpThenDown;
  s.law = StepLaw::TwoPoint;
  s.K1 = s.K2 = 0.5;
  s.K3 = 1.0;
  s.T0 = 40.0;
  s.T = 8.0;
  std::uint64_t seed = 5;
  for (auto _ : state)
    benchmark::DoNotOptimize(simulate_stopping(s, 100, seed++));
}

}  // namespace

BENCHMARK(BM_LogSumExp)->Arg(16)->Arg(256)->Arg(4096);
BENCHMARK(BM_BayesUpdate)->Arg(2)->Arg(16)->Arg(256);
BENCHMARK(BM_Trial);
BENCHMARK(BM_TrialReference);
BENCHMARK(BM_Capacity);
BENCHMARK(BM_WalkTrial);

BENCHMARK_MAIN();
