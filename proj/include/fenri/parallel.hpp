#pragma once

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace fenri {

/// Process-wide worker cap, set once by the CLI --threads flag.
int& max_threads();

/// Runs fn(i) for i in [0, n). Work is split into fixed contiguous chunks,
/// so results written to per-index slots are identical for any thread count.
template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn, int threads = 0) {
  if (threads <= 0) threads = max_threads();
  threads = int(std::max<std::int64_t>(1, std::min<std::int64_t>(threads, n)));
  if (threads == 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::int64_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const std::int64_t lo = t * chunk;
    const std::int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace fenri
