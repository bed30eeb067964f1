#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace amlmc {

/// Samples are processed in fixed chunks of this size. Chunk boundaries do not
/// depend on the thread count, and chunk results are merged in index order,
/// so reductions are bitwise reproducible for any number of workers.
inline constexpr std::uint64_t kChunkSize = 4096;

/// 0 means "all hardware threads".
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs chunk(begin, end) -> Acc over [0, n) in parallel and folds the chunk
/// results left to right with merge(Acc&, const Acc&). If any chunk throws,
/// the exception from the lowest-numbered failing chunk is rethrown.
template <typename Acc, typename ChunkFn, typename MergeFn>
Acc chunked_reduce(std::uint64_t n, int threads, ChunkFn&& chunk, MergeFn&& merge,
                   std::uint64_t chunk_size = kChunkSize) {
  const std::uint64_t chunks = (n + chunk_size - 1) / chunk_size;
  std::vector<Acc> partial(chunks);
  std::vector<std::exception_ptr> errors(chunks);
  std::atomic<std::uint64_t> next{0};
  auto worker = [&] {
    for (std::uint64_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) {
      const std::uint64_t begin = c * chunk_size;
      const std::uint64_t end = std::min(n, begin + chunk_size);
      try {
        partial[c] = chunk(begin, end);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const int workers = static_cast<int>(std::min<std::uint64_t>(static_cast<std::uint64_t>(resolve_threads(threads)),
                                                               std::max<std::uint64_t>(chunks, 1)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  Acc total{};
  for (const auto& p : partial) merge(total, p);
  return total;
}

/// Runs task(i) for i in [0, n) on up to `threads` workers; results are
/// stored by index.
template <typename Result, typename Task>
std::vector<Result> parallel_map(std::uint64_t n, int threads, Task&& task) {
  std::vector<Result> out(n);
  chunked_reduce<int>(
      n, threads,
      [&](std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t i = begin; i < end; ++i) out[i] = task(i);
        return 0;
      },
      [](int&, const int&) {}, 1);
  return out;
}

}  // namespace amlmc
