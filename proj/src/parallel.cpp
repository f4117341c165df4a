// SPDX-License-Identifier: Apache-2.0
#include "snd/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace snd {
namespace {

int threads_from_env() {
    if (const char* env = std::getenv("SND_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) {
                return n;
            }
        } catch (const std::exception&) {
        }
    }
    return 1;
}

std::atomic<int>& thread_setting() {
    static std::atomic<int> value{threads_from_env()};
    return value;
}

} // namespace

int num_threads() { return thread_setting().load(); }

void set_num_threads(int n) { thread_setting().store(std::max(1, n)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    if (n == 0) {
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(num_threads()), n);
    if (workers <= 1) {
        body(0, n);
        return;
    }

    // dynamic chunking; each index is processed exactly once
    const std::size_t chunk = std::max<std::size_t>(1, n / (workers * 4));
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t begin = next.fetch_add(chunk);
            if (begin >= n) {
                return;
            }
            try {
                body(begin, std::min(n, begin + chunk));
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                next.store(n);
                return;
            }
        }
    };

    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t i = 1; i < workers; ++i) {
        pool.emplace_back(worker);
    }
    worker();
    pool.clear();
    if (error) {
        std::rethrow_exception(error);
    }
}

} // namespace snd
