#pragma once

#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <thread>
#include <vector>

namespace regioncl {

// Worker count: hardware concurrency, capped by REGIONCL_THREADS when set.
inline int worker_count() {
  static const int cached = [] {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("REGIONCL_THREADS")) {
      char* end = nullptr;
      const long cap = std::strtol(env, &end, 10);
      if (end == env || *end != '\0' || cap < 1)
        throw std::invalid_argument("REGIONCL_THREADS must be a positive integer");
      n = std::min<long>(n, cap);
    }
    return n;
  }();
  return cached;
}

// Splits [0, n) into one contiguous chunk per worker. Each index lands in
// exactly one chunk regardless of worker count, so per-index work with
// disjoint writes stays bitwise-reproducible.
template <typename F>
void parallel_chunks(int n, F&& fn) {
  if (n <= 0) return;
  const int workers = std::min(worker_count(), n);
  if (workers == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  const int base = n / workers, extra = n % workers;
  int begin = 0;
  for (int t = 0; t < workers; ++t) {
    const int len = base + (t < extra ? 1 : 0);
    threads.emplace_back([&fn, begin, end = begin + len] { fn(begin, end); });
    begin += len;
  }
  for (auto& th : threads) th.join();
}

}  // namespace regioncl
