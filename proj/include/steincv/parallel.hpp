#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace steincv {

namespace detail {
inline std::atomic<int>& thread_budget_storage() {
  static std::atomic<int> budget{1};
  return budget;
}
}  // namespace detail

inline int thread_budget() { return detail::thread_budget_storage().load(); }

inline void set_thread_budget(int n) { detail::thread_budget_storage().store(n < 1 ? 1 : n); }

/// Runs fn(i) for i in [0, n). Work is split into contiguous index ranges, one
/// per worker. Callers must write to disjoint, preallocated storage only; under
/// that contract results are identical for every thread budget.
template <class F>
void parallel_for(std::ptrdiff_t n, F&& fn) {
  const int budget = thread_budget();
  if (budget <= 1 || n <= 1) {
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const auto workers = static_cast<std::ptrdiff_t>(budget) < n ? budget : static_cast<int>(n);
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::atomic<int> error_guard{0};
  for (int w = 0; w < workers; ++w) {
    const std::ptrdiff_t lo = n * w / workers;
    const std::ptrdiff_t hi = n * (w + 1) / workers;
    threads.emplace_back([&, lo, hi] {
      try {
        for (std::ptrdiff_t i = lo; i < hi; ++i) {
          if (failed.load(std::memory_order_relaxed)) return;
          fn(i);
        }
      } catch (...) {
        if (error_guard.fetch_add(1) == 0) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace steincv
