#pragma once

#include <cstddef>
#include <functional>

namespace diqa {

/// Worker-thread cap: `DIQA_THREADS` when set to a positive integer, else the hardware concurrency.
int worker_threads();

/// Runs `body(i)` for i in [0, count). Work items must write disjoint outputs;
/// callers reduce any shared result afterwards in index order.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace diqa
