#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <utility>
#include <vector>

namespace fes {

/// Runs fn(begin, end) over fixed-size chunks of [0, n). Chunk boundaries do
/// not depend on the job count, so any computation whose chunks write to
/// disjoint outputs produces identical results for every jobs value.
inline void parallel_chunks(std::size_t n, int jobs,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  constexpr std::size_t kChunks = 16;
  std::size_t chunk = (n + kChunks - 1) / kChunks;
  if (jobs <= 1 || n < 2 * chunk) {
    fn(0, n);
    return;
  }
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t b = 0; b < n; b += chunk) ranges.emplace_back(b, std::min(n, b + chunk));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= ranges.size()) return;
      fn(ranges[i].first, ranges[i].second);
    }
  };
  std::vector<std::thread> pool;
  int threads = std::min<int>(jobs, static_cast<int>(ranges.size()));
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

} // namespace fes
