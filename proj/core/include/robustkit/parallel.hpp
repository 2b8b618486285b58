#pragma once

#include <cstddef>
#include <functional>

namespace robustkit {

// Worker cap: ROBUSTKIT_THREADS if set to a positive integer, otherwise the
// hardware concurrency (at least 1).
std::size_t worker_count();

// Runs fn(0..n-1) on up to `workers` threads. Each index is processed exactly
// once; callers write results by index so output order never depends on
// scheduling. The first exception thrown by fn is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t workers = worker_count());

}  // namespace robustkit
