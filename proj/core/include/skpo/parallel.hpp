#pragma once
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace skpo {

// Runs fn(i) for i in [0, n). Each index writes only its own output slot, so
// results do not depend on the worker count; callers reduce in index order.
inline void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn) {
  if (workers <= 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  size_t w = std::min<size_t>(size_t(workers), n);
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (size_t t = 0; t < w; ++t) {
    pool.emplace_back([t, w, n, &fn] {
      for (size_t i = t; i < n; i += w) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace skpo
