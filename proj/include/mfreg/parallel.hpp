#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mfreg {

  /// Worker count: METRIC_FREG_THREADS when set to a positive integer, else the hardware concurrency.
  inline unsigned thread_count() {
    if (const char* env = std::getenv("METRIC_FREG_THREADS")) {
      try {
        const long v = std::stol(env);
        if (v > 0) { return static_cast<unsigned>(v); }
      } catch (const std::exception&) {}
    }
    return std::max(1u, std::thread::hardware_concurrency());
  }

  /// Runs fn(i) for i in [0, n) on a shared work queue. Results must be written to slot i by the
  /// caller, so output never depends on scheduling. The first exception is rethrown after all workers join.
  template<typename F>
  void parallel_for(std::size_t n, F&& fn, unsigned workers = thread_count()) {
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    if (workers <= 1) {
      for (std::size_t i = 0; i < n; ++i) { fn(i); }
      return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) { error = std::current_exception(); }
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) { pool.emplace_back(work); }
    for (auto& t : pool) { t.join(); }
    if (error) { std::rethrow_exception(error); }
  }

} // namespace mfreg
