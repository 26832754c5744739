#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stlcal {

// Execution policy for the batch kernels. Parallel uses OpenMP; Serial is the
// reference path the tests compare against. Both must produce bit-identical
// results: parallel loops only ever write disjoint output slots, and any
// reduction happens serially in index order afterwards.
enum class ExecMode { Serial, Parallel };

ExecMode& default_exec_mode();

// Sets the OpenMP thread count; 0 keeps the runtime default. Returns the
// effective mode (Serial when threads == 1 or OpenMP is unavailable).
ExecMode configure_threads(int threads);

int max_threads();

template <typename Fn>
void for_each_index(std::size_t n, ExecMode mode, Fn&& fn) {
  if (mode == ExecMode::Parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      fn(static_cast<std::size_t>(i));
    }
    return;
#endif
  }
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

template <typename Fn>
void for_each_index(std::size_t n, Fn&& fn) {
  for_each_index(n, default_exec_mode(), fn);
}

}  // namespace stlcal
