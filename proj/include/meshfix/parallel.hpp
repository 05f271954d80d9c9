#pragma once

#include <cstddef>
#include <functional>

namespace meshfix {

// Requested count if positive, else $MESHFIX_THREADS, else hardware concurrency.
int resolve_threads(int requested);

// Calls body(i) for i in [0, n) on up to `threads` workers. Each index runs
// exactly once; callers write results by index. The first exception thrown
// by any worker is rethrown after all workers join.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace meshfix
