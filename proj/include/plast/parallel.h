#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace plast {

// Worker cap from PLAST_THREADS; unset or invalid means 1 (single-threaded).
inline size_t worker_count() {
    const char * env = std::getenv("PLAST_THREADS");
    if (!env) return 1;
    try {
        const long v = std::stol(env);
        return v > 0 ? size_t(v) : 1;
    } catch (...) {
        return 1;
    }
}

// Runs fn(i) for i in [0, n). Each index writes only its own output slot, so
// results do not depend on the worker count. The first exception is rethrown.
template <class F>
void parallel_for(size_t n, F && fn, size_t workers = worker_count()) {
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (size_t i = w; i < n; i += workers) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto & t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace plast
