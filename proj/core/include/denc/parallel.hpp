#pragma once

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace denc {

// Worker count for inference-time parallelism: DENC_THREADS when set and
// positive, otherwise the hardware count. Training stays single-threaded
// regardless; only read-only work fans out.
inline unsigned worker_count() {
  if (const char* env = std::getenv("DENC_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

// Runs fn(i) for i in [0, n) across workers. Each index is claimed by
// exactly one worker; fn must only write state owned by its index.
template <typename Fn>
void parallel_for(size_t n, Fn&& fn) {
  const unsigned workers = std::min<size_t>(worker_count(), n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([w, workers, n, &fn] {
      for (size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace denc
