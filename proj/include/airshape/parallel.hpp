#ifndef AIRSHAPE_PARALLEL_HPP
#define AIRSHAPE_PARALLEL_HPP

#include <functional>
#include <thread>
#include <vector>

namespace airshape {

// Runs fn(i) for i in [0, n). Work is strided across threads; each index is
// handled by exactly one thread, so results must not depend on scheduling.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    if (jobs <= 0) jobs = int(std::thread::hardware_concurrency());
    jobs = std::min(jobs, n);
    if (jobs <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(jobs);
    for (int t = 0; t < jobs; ++t)
        threads.emplace_back([&, t]() {
            for (int i = t; i < n; i += jobs) fn(i);
        });
    for (auto& th : threads) th.join();
}

} // namespace airshape

#endif
