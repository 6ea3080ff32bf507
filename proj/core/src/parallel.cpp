#include "absde/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <limits>
#include <thread>

namespace absde {

int thread_count() {
    static const int n = [] {
        if (const char* env = std::getenv("ABSDE_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v >= 1 && v <= 1024) return static_cast<int>(v);
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return n;
}

void parallel_for_blocks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t blocks = (n + kReduceBlock - 1) / kReduceBlock;
    const int workers = std::min<std::size_t>(thread_count(), blocks);
    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b)
            fn(b * kReduceBlock, std::min(n, (b + 1) * kReduceBlock));
        return;
    }
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= blocks) return;
            fn(b * kReduceBlock, std::min(n, (b + 1) * kReduceBlock));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int i = 1; i < workers; ++i) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
}

double blocked_sum(std::size_t n, const std::function<double(std::size_t)>& term) {
    double acc = 0.0;
    blocked_accumulate(n, 1, &acc, [&](std::size_t b, std::size_t e, double* partial) {
        double s = 0.0;
        for (std::size_t i = b; i < e; ++i) s += term(i);
        partial[0] = s;
    });
    return acc;
}

void blocked_accumulate(std::size_t n, std::size_t width, double* acc,
                        const std::function<void(std::size_t, std::size_t, double*)>& block_fn) {
    if (n == 0 || width == 0) return;
    const std::size_t blocks = (n + kReduceBlock - 1) / kReduceBlock;
    std::vector<double> partials(blocks * width, 0.0);
    parallel_for_blocks(n, [&](std::size_t b, std::size_t e) {
        block_fn(b, e, partials.data() + (b / kReduceBlock) * width);
    });
    // Sequential merge in block order: the sum is independent of thread count.
    for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t w = 0; w < width; ++w) acc[w] += partials[b * width + w];
}

double parallel_max(std::size_t n, const std::function<double(std::size_t)>& term) {
    if (n == 0) return -std::numeric_limits<double>::infinity();
    const std::size_t blocks = (n + kReduceBlock - 1) / kReduceBlock;
    std::vector<double> partials(blocks, -std::numeric_limits<double>::infinity());
    parallel_for_blocks(n, [&](std::size_t b, std::size_t e) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = b; i < e; ++i) m = std::max(m, term(i));
        partials[b / kReduceBlock] = m;
    });
    double m = partials[0];
    for (std::size_t b = 1; b < blocks; ++b) m = std::max(m, partials[b]);
    return m;
}

} // namespace absde
