#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace shapeforge {

/// Worker count for data generation: `requested` if positive, otherwise the
/// hardware count (capped at 8). SHAPEFORGE_THREADS caps the result either way.
inline int effective_threads(int requested = 0) {
  int n = requested > 0 ? requested
                        : std::min(8u, std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("SHAPEFORGE_THREADS")) {
    int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return std::max(1, n);
}

/// Static block partition of [0, n) over `threads` workers. Each index is
/// visited exactly once; results must be written to per-index slots so the
/// outcome is identical for any worker count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  threads = std::max(1, threads);
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace shapeforge
