#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace smorm {

// Thread cap for every parallel region. Initialized from SMORM_LAB_THREADS
// (unset or invalid means "all available").
int max_threads();
void set_max_threads(int n);

// Parallel loop over [0, n). Each index must write only to its own output
// slot; results are then independent of scheduling.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_parallel = 2) {
#ifdef _OPENMP
  const int threads = max_threads();
  if (threads > 1 && n >= min_parallel) {
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static) num_threads(threads)
    for (long long i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace smorm
