#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace aircal {

/// Runs fn(begin, end) over a static partition of [0, total). Results must be
/// written to disjoint slots; reductions happen afterwards in index order so
/// that output does not depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t total, std::size_t threads, Fn&& fn) {
    if (total == 0) return;
    if (threads <= 1 || total == 1) {
        fn(std::size_t{0}, total);
        return;
    }
    const std::size_t workers = std::min(threads, total);
    const std::size_t chunk = (total + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(total, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, w, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::size_t default_threads() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

} // namespace aircal
