#pragma once

#include <cstddef>
#include <functional>

namespace keynet {

// Worker count: KEYNET_THREADS if set and positive, otherwise the hardware
// concurrency (at least 1).
std::size_t worker_count();

// Runs body(begin, end) over contiguous chunks of [0, n). Callers must make
// each index's result independent of the chunking.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 256);

}  // namespace keynet
