// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace mgrecon {

// Global worker cap set once by the CLI --threads flag. 0 = hardware default.
inline int& thread_cap() {
  static int cap = 0;
  return cap;
}

inline int effective_threads() {
  int cap = thread_cap();
  if (cap > 0) return cap;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(begin, end) over disjoint chunks of [0, n). Chunking depends only
// on n, never on the thread count, so per-slot writers produce identical
// results for any --threads value. fn must only write to slots in its range.
inline void parallel_for(size_t n, const std::function<void(size_t, size_t)>& fn) {
  if (n == 0) return;
  int workers = std::min<size_t>(effective_threads(), n);
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  size_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    size_t begin = static_cast<size_t>(w) * chunk;
    size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

// Deterministic sum reduction: partial sums over fixed-size blocks computed
// in parallel, then reduced serially in block order. The block size is a
// constant, so the floating-point summation tree is identical for any
// thread count.
inline double block_sum(size_t n, const std::function<double(size_t)>& term) {
  constexpr size_t kBlock = 4096;
  if (n == 0) return 0.0;
  size_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(blocks, 0.0);
  parallel_for(blocks, [&](size_t b0, size_t b1) {
    for (size_t b = b0; b < b1; ++b) {
      size_t lo = b * kBlock;
      size_t hi = std::min(n, lo + kBlock);
      double acc = 0.0;
      for (size_t i = lo; i < hi; ++i) acc += term(i);
      partial[b] = acc;
    }
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

} // namespace mgrecon
