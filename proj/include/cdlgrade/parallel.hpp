#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace cdlgrade {

inline unsigned resolve_workers(unsigned workers) {
    return workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : workers;
}

// Runs fn(begin, end) over [0, count) split into contiguous chunks.
template <typename Fn>
void parallel_chunks(std::size_t count, unsigned workers, Fn&& fn) {
    workers = static_cast<unsigned>(std::min<std::size_t>(resolve_workers(workers), std::max<std::size_t>(1, count)));
    if (workers <= 1) {
        fn(std::size_t{0}, count);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (count + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& t : pool) t.join();
}

// Runs fn(i) for every i in [0, count), handing out indices dynamically. The
// first exception (by index) is rethrown after all workers finish.
template <typename Fn>
void run_indexed(std::size_t count, unsigned workers, Fn&& fn) {
    workers = static_cast<unsigned>(std::min<std::size_t>(resolve_workers(workers), count));
    std::vector<std::exception_ptr> errors(count);
    auto guarded = [&](std::size_t i) {
        try {
            fn(i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) guarded(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) guarded(i);
            });
        }
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

} // namespace cdlgrade
