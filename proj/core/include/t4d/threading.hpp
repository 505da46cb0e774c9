#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace t4d {

// Worker count used by parallel_chunks. 0 means "use hardware concurrency".
// The chunk partition never depends on this value, only on (n, chunk_size),
// so results that merge per-chunk state in chunk order are bitwise identical
// for any worker count.
void set_worker_count(int n);
int worker_count();

inline std::size_t chunk_count(std::size_t n, std::size_t chunk_size) {
  if (chunk_size == 0) chunk_size = 1;
  return (n + chunk_size - 1) / chunk_size;
}

// Calls fn(chunk_idx, begin, end) for every chunk of [0, n). Chunks may be
// processed concurrently and in any order; callers that accumulate must do so
// per chunk and merge in chunk order afterwards.
void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace t4d
