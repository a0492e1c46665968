#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace cspec {

/// Worker count: hardware concurrency, capped by CRYSTAL_SPECTRA_THREADS.
inline int worker_count() {
    int workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    if (const char* env = std::getenv("CRYSTAL_SPECTRA_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1 && cap < workers) workers = cap;
    }
    return workers;
}

/// Runs fn(i) for i in [0, count). Each index writes only its own slot, so
/// results are schedule-independent; the reduction order is up to the caller.
inline void parallel_for(long count, const std::function<void(long)>& fn) {
    const int workers = std::min<long>(worker_count(), count) > 0
                            ? static_cast<int>(std::min<long>(worker_count(), count))
                            : 1;
    if (workers <= 1 || count < 2) {
        for (long i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (long i = w; i < count; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace cspec
