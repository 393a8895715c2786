#pragma once

#include <cstddef>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace weylglue {

// Thread cap: WEYL_GLUE_THREADS if set, otherwise hardware concurrency.
inline unsigned thread_cap() {
  if (const char* env = std::getenv("WEYL_GLUE_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? hc : 1;
}

// Runs body(i) for i in [0, n). Each iteration must write only to its own
// output slot; results are then independent of the thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  unsigned nthreads = thread_cap();
  if (nthreads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  if (nthreads > n) nthreads = static_cast<unsigned>(n);
  std::vector<std::thread> workers;
  workers.reserve(nthreads);
  for (unsigned t = 0; t < nthreads; ++t) {
    workers.emplace_back([&, t]() {
      for (std::size_t i = t; i < n; i += nthreads) body(i);
    });
  }
  for (auto& w : workers) w.join();
}

// Deterministic pairwise tree sum; result depends only on slot order.
inline double pairwise_sum(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::size_t n = v.size();
  while (n > 1) {
    std::size_t m = (n + 1) / 2;
    for (std::size_t i = 0; i < n / 2; ++i) v[i] = v[2 * i] + v[2 * i + 1];
    if (n % 2 == 1) v[n / 2] = v[n - 1];
    n = m;
  }
  return v[0];
}

}  // namespace weylglue
