#include "tgocr/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace tgocr {

static int read_thread_cap() {
    if (const char* env = std::getenv("TGOCR_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) {
            return static_cast<int>(std::min(v, 256L));
        }
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

int thread_cap() {
    static const int cap = read_thread_cap();
    return cap;
}

bool deterministic_mode() { return thread_cap() == 1; }

std::vector<std::pair<std::int64_t, std::int64_t>> split_ranges(std::int64_t n,
                                                                std::int64_t grain) {
    std::vector<std::pair<std::int64_t, std::int64_t>> ranges;
    if (n <= 0) {
        return ranges;
    }
    grain = std::max<std::int64_t>(1, grain);
    const std::int64_t max_chunks = std::min<std::int64_t>(thread_cap(), (n + grain - 1) / grain);
    const std::int64_t chunks = std::max<std::int64_t>(1, max_chunks);
    const std::int64_t base = n / chunks;
    const std::int64_t extra = n % chunks;
    std::int64_t begin = 0;
    for (std::int64_t c = 0; c < chunks; ++c) {
        const std::int64_t len = base + (c < extra ? 1 : 0);
        ranges.emplace_back(begin, begin + len);
        begin += len;
    }
    return ranges;
}

void run_ranges(const std::vector<std::pair<std::int64_t, std::int64_t>>& ranges,
                const std::function<void(std::size_t, std::int64_t, std::int64_t)>& fn) {
    if (ranges.empty()) {
        return;
    }
    if (ranges.size() == 1) {
        fn(0, ranges[0].first, ranges[0].second);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(ranges.size() - 1);
    for (std::size_t c = 1; c < ranges.size(); ++c) {
        workers.emplace_back([&fn, &ranges, c] { fn(c, ranges[c].first, ranges[c].second); });
    }
    fn(0, ranges[0].first, ranges[0].second);
    for (auto& w : workers) {
        w.join();
    }
}

} // namespace tgocr
