#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace nonstat {

/// Run f(i) for i in [begin, end) on up to `threads` workers. Each index
/// is processed exactly once; callers must make f(i) depend only on i
/// (e.g. write to slot i, draw from RNG child stream i), so the result
/// is identical for any worker count.
template <typename F>
void parallel_for(std::size_t begin, std::size_t end, std::size_t threads, F&& f) {
  if (end <= begin) return;
  const std::size_t total = end - begin;
  if (threads <= 1 || total == 1) {
    for (std::size_t i = begin; i < end; ++i) f(i);
    return;
  }
  const std::size_t workers = std::min(threads, total);
  std::atomic<std::size_t> next{begin};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= end || failed.load()) return;
      try {
        f(i);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (failed.load() && error) std::rethrow_exception(error);
}

}  // namespace nonstat
