#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace csc {

inline unsigned hardware_threads() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

// Runs fn(i) for i in [begin, end). When `parallel` is false or the range is
// tiny the loop runs inline. Iterations must write to disjoint state; the
// partition into contiguous chunks keeps results identical for any thread count.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, bool parallel, Fn&& fn) {
    const std::size_t n = end > begin ? end - begin : 0;
    const unsigned workers = hardware_threads();
    if (!parallel || n < 2 || workers < 2) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
        return;
    }
    const unsigned t = static_cast<unsigned>(n < workers ? n : workers);
    std::vector<std::thread> pool;
    pool.reserve(t);
    const std::size_t chunk = (n + t - 1) / t;
    for (unsigned w = 0; w < t; ++w) {
        const std::size_t lo = begin + w * chunk;
        const std::size_t hi = lo + chunk < end ? lo + chunk : end;
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace csc
