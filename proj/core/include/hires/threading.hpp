#pragma once

#include <cstdint>
#include <functional>

namespace hires {

// Worker cap for kernel-level parallelism. Work is partitioned into
// contiguous ranges so every output element is produced by exactly one
// worker with a fixed reduction order; results are identical to the
// sequential run for any thread count.
int max_threads();
void set_max_threads(int n);

// Invokes fn(begin, end) over a partition of [0, n).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace hires
