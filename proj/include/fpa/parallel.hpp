#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace fpa {

//! Worker count for a request of `threads` (0 means all cores).
inline std::size_t resolve_threads(std::size_t threads)
{
  if (threads != 0)
    return threads;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/**
 * Calls body(i) for i in [0, count) on up to `threads` workers. If any call
 * throws, the exception of the lowest failing index is rethrown after all
 * workers finish, so failures do not depend on scheduling.
 */
template <class Body>
void parallel_for(std::size_t count, std::size_t threads, Body&& body)
{
  const std::size_t workers = std::min(resolve_threads(threads), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i)
      body(i);
    return;
  }
  std::atomic<std::size_t> next{ 0 };
  std::vector<std::exception_ptr> errors(count);
  auto run = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w)
      pool.emplace_back(run);
    run();
  }
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);
}

} // namespace fpa
