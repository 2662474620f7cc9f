#pragma once

#include <cstddef>
#include <functional>

namespace gdkd {

/// Worker count: hardware concurrency, capped by the GDKD_THREADS
/// environment variable when it holds a positive integer.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index
/// is visited exactly once; callers write results by index so the outcome
/// does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace gdkd
