#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace edpci {

/// Worker count: explicit request, else EDPCI_WORKERS, else hardware threads.
inline int resolve_workers(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("EDPCI_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs f(0..count-1) on up to `workers` threads. Tasks must only touch
/// their own outputs. The first exception (lowest task index) is rethrown.
template <class F>
void parallel_for(int count, int workers, F&& f) {
  workers = std::clamp(workers, 1, std::max(1, count));
  if (workers == 1) {
    for (int t = 0; t < count; ++t) f(t);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int t = next++; t < count; t = next++) {
        try {
          f(t);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace edpci
