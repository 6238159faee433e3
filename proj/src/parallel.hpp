#pragma once

#include "stemfit/core.hpp"

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace stemfit::detail {

// Runs fn(begin, end) over contiguous chunks of [0, count). Each index is
// processed by exactly one call, so per-index results never depend on the
// number of workers.
template <typename Fn>
void parallel_chunks(Index count, int workers, Fn&& fn) {
  const Index w = std::clamp<Index>(workers, 1, std::max<Index>(count, 1));
  if (w <= 1) {
    fn(Index{0}, count);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(w));
  const Index chunk = (count + w - 1) / w;
  for (Index t = 0; t < w; ++t) {
    const Index begin = t * chunk;
    const Index end = std::min(count, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&, t, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace stemfit::detail
