// Serial reference vs OpenMP kernels, plus one bound scan per backend.

#include <benchmark/benchmark.h>

#include "steerkit/bounds.hpp"
#include "steerkit/kernels.hpp"
#include "steerkit/random.hpp"

using namespace steerkit;

namespace {

struct Operands {
  Matrix a, b, c;
  explicit Operands(std::size_t n) : c(n, n) {
    Rng rng(7);
    a = random_normal(rng, n, n);
    b = random_normal(rng, n, n);
  }
};

void BM_GemmSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Operands op(n);
  for (auto _ : state) {
    kernels::serial::gemm(n, n, n, op.a.data(), op.b.data(), op.c.data());
    benchmark::DoNotOptimize(op.c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

void BM_GemmOmp(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Operands op(n);
  for (auto _ : state) {
    kernels::omp::gemm(n, n, n, op.a.data(), op.b.data(), op.c.data());
    benchmark::DoNotOptimize(op.c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

void BM_GemmNtSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Operands op(n);
  for (auto _ : state) {
    kernels::serial::gemm_nt(n, n, n, op.a.data(), op.b.data(), op.c.data());
    benchmark::DoNotOptimize(op.c.data().data());
  }
}

void BM_GemmNtOmp(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Operands op(n);
  for (auto _ : state) {
    kernels::omp::gemm_nt(n, n, n, op.a.data(), op.b.data(), op.c.data());
    benchmark::DoNotOptimize(op.c.data().data());
  }
}

void BM_ForEachSerial(benchmark::State& state) {
  std::vector<double> out(256);
  for (auto _ : state) {
    kernels::serial::for_each_index(out.size(), [&](std::size_t i) {
      Rng rng(1, i);
      const Matrix m = random_normal(rng, 16, 16);
      out[i] = frobenius_norm(m * m);
    });
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_ForEachOmp(benchmark::State& state) {
  std::vector<double> out(256);
  for (auto _ : state) {
    kernels::omp::for_each_index(out.size(), [&](std::size_t i) {
      Rng rng(1, i);
      const Matrix m = random_normal(rng, 16, 16);
      out[i] = frobenius_norm(m * m);
    });
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_BoundScanAttention(benchmark::State& state) {
  BoundScanOptions o;
  o.trials = 200;
  for (auto _ : state) {
    const auto r = scan_bound(Lemma::attention, 3, o);
    benchmark::DoNotOptimize(r.max_lhs_over_rhs);
  }
}

}  // namespace

BENCHMARK(BM_GemmSerial)->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_GemmOmp)->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_GemmNtSerial)->Arg(64)->Arg(256);
BENCHMARK(BM_GemmNtOmp)->Arg(64)->Arg(256);
BENCHMARK(BM_ForEachSerial);
BENCHMARK(BM_ForEachOmp);
BENCHMARK(BM_BoundScanAttention)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
