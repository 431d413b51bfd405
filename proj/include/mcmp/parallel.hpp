#pragma once

#include <cstddef>
#include <functional>

namespace mcmp {

// Worker count: MCMP_THREADS if set to a positive integer, otherwise the
// hardware concurrency (at least 1).
int worker_count();

// Calls fn(chunk) for chunk = 0..chunks-1 across worker_count() threads.
// Chunks are claimed dynamically; callers write results into per-chunk slots
// and reduce them in index order afterwards, which keeps results independent
// of the thread count.
void parallel_for_chunks(std::size_t chunks, const std::function<void(std::size_t)>& fn);

}  // namespace mcmp
