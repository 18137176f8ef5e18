#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace pertfool {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is handed out
/// in fixed-size chunks so each index is processed exactly once; callers that
/// need deterministic aggregate results must write into per-index slots and
/// reduce in ascending index order afterwards. Results are then independent
/// of the thread count.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (n == 0) return;
    if (threads <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    constexpr std::size_t kChunk = 8;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t begin = next.fetch_add(kChunk);
            if (begin >= n) return;
            std::size_t end = begin + kChunk < n ? begin + kChunk : n;
            for (std::size_t i = begin; i < end; ++i) fn(i);
        }
    };
    unsigned spawn = threads - 1;
    if (spawn > n / kChunk) spawn = static_cast<unsigned>(n / kChunk);
    std::vector<std::thread> pool;
    pool.reserve(spawn);
    for (unsigned t = 0; t < spawn; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

}  // namespace pertfool
