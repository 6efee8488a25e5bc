#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

namespace relict {

// Worker count from RELICT_WORKERS if set and valid, else `fallback`.
unsigned resolve_worker_count(unsigned fallback);

// Runs fn(i) for i in [0, count) on up to `workers` threads. Results must be
// written by index so the outcome does not depend on scheduling. If any call
// throws, the exception from the lowest failing index is rethrown after all
// threads join; indices above a known failure are skipped.
template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  if (count == 0) return;
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(
                                                         std::min<std::size_t>(count, 1u << 16))));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> first_failure{std::numeric_limits<std::size_t>::max()};
  std::mutex failure_mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count || i > first_failure.load(std::memory_order_acquire)) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (i < first_failure.load(std::memory_order_relaxed)) {
          first_failure.store(i, std::memory_order_release);
          failure = std::current_exception();
        }
      }
    }
  };

  std::vector<std::jthread> threads;
  threads.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) threads.emplace_back(worker);
  threads.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace relict
