#pragma once

#include <cstddef>
#include <functional>

namespace evikit {

// Worker cap: EVIKIT_THREADS when set to a positive integer, otherwise the
// hardware concurrency (at least 1).
std::size_t worker_count();

// Calls body(i) for every i in [0, n) on up to worker_count() threads.
// Callers write results by index, so output never depends on scheduling.
// The first exception thrown by any body is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace evikit
