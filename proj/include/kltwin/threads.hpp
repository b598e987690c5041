#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "kltwin/grid.hpp"

namespace kltwin {

// Worker count: explicit argument > KLTWIN_THREADS > hardware concurrency.
inline int resolve_thread_count(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("KLTWIN_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0 && v <= 1024) return static_cast<int>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(std::min(hw, 16u));
}

// Parallel loop over [0, n).  Each index is processed exactly once and the
// body must write only to its own slot(s), so results are independent of the
// thread count and of scheduling.  Exceptions are captured and rethrown once.
template <typename Body>
void parallel_for(Index n, int threads, Body&& body) {
    const int nthreads = std::max(1, std::min<int>(resolve_thread_count(threads), static_cast<int>(n > 0 ? n : 1)));
    if (nthreads == 1 || n <= 1) {
        for (Index i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<Index> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const Index i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n, std::memory_order_relaxed);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

} // namespace kltwin
