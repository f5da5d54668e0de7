#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace cimsim {

// Runs fn(task_index) for task_index in [0, n_tasks). Task boundaries are
// fixed by the caller, never by the thread count, so any work keyed off the
// task index produces identical results at every parallelism degree.
inline void parallel_for_tasks(int n_tasks, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || n_tasks <= 1) {
        for (int i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n_tasks) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    int n = std::min(threads, n_tasks);
    pool.reserve(n);
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

}  // namespace cimsim
