#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dmseg
{

/// Runs task(i) for i in [0, n_tasks) on up to `threads` workers. Tasks must
/// write only to their own output slots; the result is then independent of
/// scheduling. The first exception thrown by any task is rethrown.
template <typename Task>
void parallel_for(std::size_t n_tasks, std::size_t threads, Task&& task)
{
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n_tasks, 1));
    if (threads == 1)
    {
        for (std::size_t i = 0; i < n_tasks; ++i)
        {
            task(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]
    {
        while (true)
        {
            const auto i = next.fetch_add(1);
            if (i >= n_tasks)
            {
                return;
            }
            try
            {
                task(i);
            }
            catch (...)
            {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                {
                    failure = std::current_exception();
                }
                next.store(n_tasks);
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t)
    {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& th : pool)
    {
        th.join();
    }
    if (failure)
    {
        std::rethrow_exception(failure);
    }
}

}  // namespace dmseg
