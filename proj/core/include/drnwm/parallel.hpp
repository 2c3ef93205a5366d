// Index-ordered parallel loops.
#pragma once

#include <cstddef>
#include <functional>

namespace drnwm {

/// Worker count: hardware concurrency, capped by DRNM_THREADS when set.
int worker_count();

/// Calls fn(i) for i in [0, n) across worker_count() threads. Callers write
/// results into slot i, so the reduction order is the index order. The first
/// exception (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace drnwm
