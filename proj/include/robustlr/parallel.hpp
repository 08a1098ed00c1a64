#pragma once

#include <cstddef>
#include <functional>

namespace rlr {

// Thread count from ROBUSTLOWRANK_THREADS, else hardware concurrency (>= 1).
std::size_t default_thread_count();

// Runs body(i) for i in [0, count) on up to `threads` workers. Indices are
// handed out dynamically, so callers must write results into per-index slots
// and never accumulate across indices inside the body. After a failure no new
// indices are started; the exception of the lowest failing index is rethrown
// once all workers join.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

} // namespace rlr
