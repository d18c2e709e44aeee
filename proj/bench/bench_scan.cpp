#include <benchmark/benchmark.h>

#include <vector>

#include "mvh/rng.hpp"
#include "mvh/scan.hpp"

using namespace mvh;

namespace {

std::vector<double> input(std::size_t n) {
  Rng rng(42);
  std::vector<double> u(n);
  for (double& v : u) v = rng.normal();
  return u;
}

const ssm::DiscreteSSM kChannel = ssm::DiscreteSSM::from_continuous(-1.0, 1.0, 1.0, 0.0, 0.01);

void BM_ScanSequential(benchmark::State& state) {
  const auto u = input(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ssm::scan_sequential(kChannel, u));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

// range(1) is the chunk size.
void BM_ScanParallel(benchmark::State& state) {
  const auto u = input(static_cast<std::size_t>(state.range(0)));
  const auto chunk = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(ssm::scan_parallel(kChannel, u, chunk));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_RecurrenceSequential(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const std::vector<double> a(n, 0.999), b = input(n);
  std::vector<double> x(n);
  for (auto _ : state) {
    ssm::linear_recurrence_sequential(a, b, x);
    benchmark::DoNotOptimize(x.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_RecurrenceChunked(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const std::vector<double> a(n, 0.999), b = input(n);
  std::vector<double> x(n);
  for (auto _ : state) {
    ssm::linear_recurrence_chunked(a, b, x, static_cast<std::size_t>(state.range(1)));
    benchmark::DoNotOptimize(x.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_ScanSequential)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_ScanParallel)->ArgsProduct({{1 << 12, 1 << 16, 1 << 20}, {64, 4096}});
BENCHMARK(BM_RecurrenceSequential)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_RecurrenceChunked)->ArgsProduct({{1 << 16, 1 << 20}, {64, 4096}});

BENCHMARK_MAIN();
