#pragma once

#include <functional>

namespace geomlab {

// Worker count: GEOMLAB_THREADS caps it, hardware concurrency is the default.
int default_threads();

// Runs fn(i) for i in [0, n) across up to `threads` std::threads (block
// partition). fn must be safe to run concurrently for distinct i; any
// exception is rethrown on the caller thread.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace geomlab
