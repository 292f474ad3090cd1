// OpenMP kernels against their serial references. Both produce bit-identical
// results; only wall time differs.

#include <benchmark/benchmark.h>

#include "smorm/kernels.hpp"
#include "smorm/rng.hpp"

using namespace smorm;

namespace {

Mat random_mat(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

void BM_matmul_parallel(benchmark::State& s) {
  const auto n = static_cast<std::size_t>(s.range(0));
  Mat a = random_mat(n, n, 1), b = random_mat(n, n, 2);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::matmul(a, b));
}

void BM_matmul_serial(benchmark::State& s) {
  const auto n = static_cast<std::size_t>(s.range(0));
  Mat a = random_mat(n, n, 1), b = random_mat(n, n, 2);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::serial::matmul(a, b));
}

// 20000 samples of dimension d: the moment estimation workload.
void BM_outer_sum_parallel(benchmark::State& s) {
  Mat x = random_mat(20000, static_cast<std::size_t>(s.range(0)), 3);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::outer_sum(x));
}

void BM_outer_sum_serial(benchmark::State& s) {
  Mat x = random_mat(20000, static_cast<std::size_t>(s.range(0)), 3);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::serial::outer_sum(x));
}

}  // namespace

BENCHMARK(BM_matmul_parallel)->Arg(64)->Arg(256);
BENCHMARK(BM_matmul_serial)->Arg(64)->Arg(256);
BENCHMARK(BM_outer_sum_parallel)->Arg(16)->Arg(64);
BENCHMARK(BM_outer_sum_serial)->Arg(16)->Arg(64);

BENCHMARK_MAIN();
