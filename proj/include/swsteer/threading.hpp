#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace swsteer {

/// Runs fn(lo, hi) over a block partition of [0, count). Each block touches
/// a disjoint index range, so results cannot depend on the thread count;
/// reductions must be done by the caller in index order afterwards.
template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  if (threads <= 1 || count < 2048) {
    fn(std::size_t{0}, count);
    return;
  }
  const std::size_t nblocks = static_cast<std::size_t>(threads);
  const std::size_t chunk = (count + nblocks - 1) / nblocks;
  std::vector<std::thread> pool;
  pool.reserve(nblocks);
  for (std::size_t b = 0; b < nblocks; ++b) {
    const std::size_t lo = b * chunk;
    if (lo >= count) break;
    const std::size_t hi = std::min(count, lo + chunk);
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace swsteer
