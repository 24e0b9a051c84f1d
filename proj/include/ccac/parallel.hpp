#pragma once

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace ccac {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Deterministic work partition: items [0,n) are split into fixed chunks of
// `chunk_size` consecutive indices, regardless of the worker count. Workers
// pull whole chunks; fn(chunk_index, begin, end) must only write to
// per-chunk or per-index slots. Callers that reduce across chunks must do
// so sequentially in chunk order, which keeps every result bit-identical
// for any thread count.
template <class Fn>
void for_chunks(int n, int chunk_size, int threads, Fn&& fn) {
    if (n <= 0) return;
    const int num_chunks = (n + chunk_size - 1) / chunk_size;
    threads = std::min(resolve_threads(threads), num_chunks);
    if (threads <= 1) {
        for (int c = 0; c < num_chunks; ++c)
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int c = next.fetch_add(1, std::memory_order_relaxed);
            if (c >= num_chunks) return;
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads) - 1);
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
}

inline constexpr int kDefaultChunk = 32;

}  // namespace ccac
