#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace agebench {

// Runs fn(i) for i in [0, n) on up to `parallelism` worker threads. Results
// land at their input index, so output order is deterministic regardless of
// scheduling. The first exception wins and is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t n, int parallelism, Fn&& fn) {
    if (n == 0) return;
    if (parallelism <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = static_cast<int>(std::min<std::size_t>(parallelism, n));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (!failed.load(std::memory_order_relaxed)) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed.store(true);
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& items, int parallelism, Fn&& fn)
    -> std::vector<decltype(fn(items[0]))> {
    std::vector<decltype(fn(items[0]))> out(items.size());
    parallel_for(items.size(), parallelism, [&](std::size_t i) { out[i] = fn(items[i]); });
    return out;
}

}  // namespace agebench
