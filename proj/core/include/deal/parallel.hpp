#pragma once

#include <cstddef>
#include <functional>

namespace deal {

/// Worker count: DEAL_THREADS if set and positive, else hardware concurrency.
int thread_count();

/// Runs fn(i) for i in [0, n). Iterations must be independent. The first
/// exception thrown by any iteration is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace deal
