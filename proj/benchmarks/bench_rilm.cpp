#include <benchmark/benchmark.h>

#include "refu/harness.hpp"
#include "refu/matrix.hpp"
#include "refu/random.hpp"
#include "refu/rilm.hpp"

namespace {

refu::Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  refu::GaussianSampler rng(seed);
  refu::Matrix m(rows, cols);
  for (double& v : m.data()) v = rng();
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const refu::Matrix a = gaussian(n, n, 1);
  const refu::Matrix b = gaussian(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(refu::matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 256)->Complexity();

// One R update on a d_RP = 192 state; the argument is the phase size N.
void update_r_bench(benchmark::State& state, refu::InversePath path) {
  constexpr std::size_t kDrp = 192;
  const auto n = static_cast<std::size_t>(state.range(0));
  const refu::Matrix f = gaussian(n, kDrp, 3);
  const refu::Matrix r = refu::RilmState::fresh(kDrp, 1.0).r();
  for (auto _ : state) benchmark::DoNotOptimize(refu::update_r(r, f, path));
}

void BM_UpdateR_Woodbury(benchmark::State& state) {
  update_r_bench(state, refu::InversePath::woodbury);
}
void BM_UpdateR_Direct(benchmark::State& state) { update_r_bench(state, refu::InversePath::direct); }
BENCHMARK(BM_UpdateR_Woodbury)->Arg(16)->Arg(64)->Arg(192)->Arg(512);
BENCHMARK(BM_UpdateR_Direct)->Arg(16)->Arg(64)->Arg(192)->Arg(512);

void BM_RecursivePhases(benchmark::State& state) {
  refu::RandomProblemSpec spec;
  spec.phases = static_cast<std::size_t>(state.range(0));
  const auto phases = refu::random_cil_problem(spec, 11);
  for (auto _ : state) {
    refu::RilmState s = refu::rilm_init(phases.front(), 1.0);
    for (std::size_t i = 1; i < phases.size(); ++i) s = refu::rilm_learn(s, phases[i]);
    benchmark::DoNotOptimize(s.w_hat());
  }
}
BENCHMARK(BM_RecursivePhases)->Arg(4)->Arg(10);

}  // namespace

BENCHMARK_MAIN();
