#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sercor {

inline unsigned resolve_threads(int requested) {
    if (requested > 0) return static_cast<unsigned>(requested);
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

/// Runs fn(chunk_index, begin, end) over a fixed chunk grid of [0, n).
/// The grid depends only on (n, chunk_size), so per-chunk results can be
/// combined in chunk order for answers that do not depend on the thread
/// count. Exceptions are captured and rethrown on the caller's thread.
template <class Fn>
inline void parallel_chunks(std::uint64_t n, std::uint64_t chunk_size, unsigned threads, Fn&& fn) {
    if (n == 0) return;
    if (chunk_size == 0) chunk_size = 1;
    const std::uint64_t n_chunks = (n + chunk_size - 1) / chunk_size;
    if (threads <= 1 || n_chunks == 1) {
        for (std::uint64_t c = 0; c < n_chunks; ++c)
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        return;
    }
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            const std::uint64_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            try {
                fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
            } catch (...) {
                std::scoped_lock lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const unsigned n_workers = static_cast<unsigned>(std::min<std::uint64_t>(threads, n_chunks));
    pool.reserve(n_workers);
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace sercor
