#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace absde {

// Number of worker threads: ABSDE_THREADS if set and valid, else
// hardware_concurrency. Always >= 1.
int thread_count();

// Fixed block size used for every cross-path reduction. Partial results are
// computed per block (possibly in parallel) and merged in block order, so
// floating point sums are identical for any thread count.
inline constexpr std::size_t kReduceBlock = 4096;

// Runs fn(begin, end) over consecutive index blocks of size kReduceBlock.
// Blocks may execute on different threads; fn must only write state owned by
// its block.
void parallel_for_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

// Deterministic sum of term(i) for i in [0, n): per-block partial sums merged
// in block order.
double blocked_sum(std::size_t n, const std::function<double(std::size_t)>& term);

// Deterministic accumulation of vector-valued per-block partials. acc has
// length `width`; block_fn(begin, end, partial) adds the block contribution
// into `partial` (zero initialized, length `width`). Partials are added into
// acc in block order.
void blocked_accumulate(std::size_t n, std::size_t width, double* acc,
                        const std::function<void(std::size_t, std::size_t, double*)>& block_fn);

// Max reduction (order independent, parallel-safe).
double parallel_max(std::size_t n, const std::function<double(std::size_t)>& term);

} // namespace absde
