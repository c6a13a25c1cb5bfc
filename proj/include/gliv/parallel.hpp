#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gliv {

// Runs fn(i) for i in [0, count) on up to `threads` workers. Tasks are
// claimed in index order; callers store results by index so output does not
// depend on the worker count. The first exception (lowest index) is rethrown.
template <class Fn>
void parallel_for(std::int64_t count, int threads, Fn&& fn) {
  const int workers = static_cast<int>(
      std::max<std::int64_t>(1, std::min<std::int64_t>(threads, count)));
  if (workers <= 1) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::int64_t next = 0;
  std::int64_t failed_at = count;
  std::exception_ptr failure;
  auto work = [&] {
    while (true) {
      std::int64_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= count) return;
        i = next++;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace gliv
