#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace fimest {

/// Worker count: FIMEST_WORKERS if set to a positive integer, else the
/// hardware concurrency. Only affects speed, never results.
inline std::size_t default_workers() {
  if (const char* env = std::getenv("FIMEST_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, count). If any call throws, the exception from the
/// smallest failing index is rethrown, independent of scheduling.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn, std::size_t workers = default_workers()) {
  workers = std::min(workers, count);
  std::vector<std::exception_ptr> errors(count);
  // Jobs below the smallest failing index always run, so the reported error
  // is the same for any worker count.
  std::atomic<std::size_t> first_failure{count};
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next++; i < count && i < first_failure.load(); i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        std::size_t seen = first_failure.load();
        while (i < seen && !first_failure.compare_exchange_weak(seen, i)) {
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace fimest
