#pragma once

#include <cstddef>
#include <functional>

namespace mscate {

// Upper bound on worker threads for parallel_for; 0 means hardware concurrency.
void set_max_threads(unsigned n);
unsigned max_threads();

// Runs fn(i) for i in [0, n). Jobs are claimed dynamically; callers write
// results to slot i, so output never depends on thread count.
// The first exception thrown by any job is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mscate
