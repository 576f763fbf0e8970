#pragma once

#include <cstddef>
#include <functional>

namespace baffle {

/// Worker cap: BAFFLE_THREADS if set (>= 1), else hardware concurrency.
std::size_t max_threads();

/// Runs fn(i) for i in [0, n). Work items must be independent; results
/// should be written to per-index slots so the outcome is identical for
/// any thread count. Runs inline when n or the thread cap is 1.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace baffle
