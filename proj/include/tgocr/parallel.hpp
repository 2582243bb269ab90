#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace tgocr {

// Maximum number of worker threads for batch-level kernels. Controlled by
// the TGOCR_THREADS environment variable; defaults to the hardware thread
// count. A cap of 1 is the deterministic mode used by the acceptance tests.
int thread_cap();

bool deterministic_mode(); // thread_cap() == 1

// Splits [0, n) into at most thread_cap() contiguous ranges of at least
// `grain` items each.
std::vector<std::pair<std::int64_t, std::int64_t>> split_ranges(std::int64_t n,
                                                                std::int64_t grain);

// Runs fn(chunk_index, begin, end) for each range, one worker per range.
// With a single range fn runs inline on the calling thread. Chunk indices
// let callers keep per-chunk accumulators and reduce them in a fixed order,
// so results depend only on the thread cap, never on scheduling.
void run_ranges(const std::vector<std::pair<std::int64_t, std::int64_t>>& ranges,
                const std::function<void(std::size_t, std::int64_t, std::int64_t)>& fn);

// Convenience wrapper for loops without cross-chunk accumulation.
inline void parallel_for(std::int64_t n, std::int64_t grain,
                         const std::function<void(std::int64_t, std::int64_t)>& fn) {
    run_ranges(split_ranges(n, grain),
               [&fn](std::size_t, std::int64_t b, std::int64_t e) { fn(b, e); });
}

} // namespace tgocr
