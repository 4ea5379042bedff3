#include <memory>

#include <benchmark/benchmark.h>

#include "dcvr/coordinator.hpp"
#include "dcvr/synthetic.hpp"

using namespace dcvr;

namespace {

struct Reference {
  std::shared_ptr<const Feeder> feeder = std::make_shared<const Feeder>(generate_synthetic_feeder(reference_fixture_spec()));
  Partition part = partition(feeder);
  Multipliers mult = reference_snapshot();
};

const Reference& reference() {
  static const Reference r;
  return r;
}

void BM_PowerFlow(benchmark::State& state) {
  const auto& r = reference();
  const auto q = zero_dispatch(*r.feeder);
  for (auto _ : state) benchmark::DoNotOptimize(solve_powerflow(*r.feeder, q, r.mult));
}
BENCHMARK(BM_PowerFlow);

void BM_PowerFlowLarge(benchmark::State& state) {
  auto spec = reference_fixture_spec();
  spec.n_primary_buses = static_cast<int>(state.range(0));
  spec.n_secondaries = static_cast<int>(state.range(0));
  const auto f = generate_synthetic_feeder(spec);
  const auto q = zero_dispatch(f);
  for (auto _ : state) benchmark::DoNotOptimize(solve_powerflow(f, q, {0.8, 0.8, 0.3}));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PowerFlowLarge)->RangeMultiplier(2)->Range(8, 64)->Complexity();

void BM_CentralizedQp(benchmark::State& state) {
  const auto& r = reference();
  const auto m = solve_powerflow(*r.feeder, zero_dispatch(*r.feeder), r.mult).measurements;
  const auto lin = Linearization::at(*r.feeder, m, r.mult);
  const auto sp = build_centralized(r.part, lin, EpsMode::WithEps, reference_admm_config().build);
  for (auto _ : state) benchmark::DoNotOptimize(solve(sp.qp));
}
BENCHMARK(BM_CentralizedQp)->Unit(benchmark::kMillisecond);

void BM_FollowerQp(benchmark::State& state) {
  const auto& r = reference();
  const auto s = initial_state({&r.part, r.mult}, reference_admm_config());
  const auto sp = build_follower(0, r.part, s.lin, s.x_b[0], s.followers[0].lambda, 1.0, reference_admm_config().build);
  for (auto _ : state) benchmark::DoNotOptimize(solve(sp.qp));
}
BENCHMARK(BM_FollowerQp);

void BM_SyncLoop(benchmark::State& state) {
  const auto& r = reference();
  const StepContext ctx{&r.part, r.mult};
  const auto c = reference_admm_config();
  for (auto _ : state) benchmark::DoNotOptimize(run_iteration_loop(ctx, c));
}
BENCHMARK(BM_SyncLoop)->Unit(benchmark::kMillisecond);

void BM_AsyncSubsetLoop(benchmark::State& state) {
  const auto& r = reference();
  const StepContext ctx{&r.part, r.mult};
  auto c = reference_admm_config();
  c.mode = AdmmMode::Async;
  c.async_policy = AsyncPolicy::RandomSubset;
  c.partial_barrier = static_cast<int>(state.range(0));
  for (auto _ : state) {
    LatencyPolicy policy;
    policy.seed = 1;
    MessageBus bus(policy);
    benchmark::DoNotOptimize(run_iteration_loop(ctx, c, &bus));
  }
}
BENCHMARK(BM_AsyncSubsetLoop)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_WarmStep(benchmark::State& state) {
  const auto& r = reference();
  const auto c = reference_admm_config();
  const auto first = run_iteration_loop({&r.part, r.mult}, c);
  const StepContext next{&r.part, {r.mult.load_p * 1.01, r.mult.load_q * 1.01, r.mult.pv}};
  for (auto _ : state) benchmark::DoNotOptimize(run_iteration_loop(next, c, nullptr, &first.state));
}
BENCHMARK(BM_WarmStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
