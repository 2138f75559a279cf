#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ncps {

/// Run fn(block) for block = 0..n_blocks-1 on up to `threads` workers.
/// Blocks are claimed dynamically, so fn must only write block-owned
/// storage; callers reduce the per-block results in block order, which makes
/// the outcome independent of the thread count. If blocks throw, the
/// exception from the lowest-numbered failing block is rethrown.
template <class Fn>
void parallel_for_blocks(std::size_t n_blocks, unsigned threads, Fn&& fn) {
  if (n_blocks == 0) return;
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n_blocks));
  if (workers == 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) fn(b);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::size_t error_block = n_blocks;

  auto work = [&] {
    for (;;) {
      if (stop.load(std::memory_order_relaxed)) return;
      const std::size_t b = next.fetch_add(1, std::memory_order_relaxed);
      if (b >= n_blocks) return;
      try {
        fn(b);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (b < error_block) {
          error_block = b;
          error = std::current_exception();
        }
        stop.store(true, std::memory_order_relaxed);
      }
    }
  };

  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  if (error) std::rethrow_exception(error);
}

inline unsigned default_thread_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

}  // namespace ncps
