#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace drender {

// Runs fn(row_begin, row_end) over contiguous row bands, one per thread.
// Callers must only write rows inside their band; results must not depend on
// the band split so any thread count produces identical output.
inline void parallel_rows(int height, int threads,
                          const std::function<void(int, int)>& fn) {
    if (threads <= 1 || height <= 1) {
        fn(0, height);
        return;
    }
    int n = std::min(threads, height);
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (int b = 0; b < n; b++) {
        int y0 = int(int64_t(height) * b / n);
        int y1 = int(int64_t(height) * (b + 1) / n);
        pool.emplace_back(fn, y0, y1);
    }
    for (std::thread& t : pool) t.join();
}

}  // namespace drender
