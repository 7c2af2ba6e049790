#ifndef VECFOLD_PARALLEL_HPP
#define VECFOLD_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace vecfold {

/// Number of hardware threads, at least 1.
inline int default_threads() {
    return std::max(1u, std::thread::hardware_concurrency());
}

/**
 * Split [0, n) into fixed-size chunks and run `fn(chunk, begin, end)` on each.
 *
 * Chunk boundaries depend only on `n` and `chunk_size`, never on the thread
 * count, so callers that store per-chunk partial results and combine them in
 * chunk order get the same answer with 1 or 64 workers.
 */
template<class Function>
void parallel_chunks(std::size_t n, std::size_t chunk_size, int threads, Function fn) {
    if (n == 0) {
        return;
    }
    chunk_size = std::max<std::size_t>(1, chunk_size);
    const std::size_t nchunks = (n + chunk_size - 1) / chunk_size;
    const auto workers = static_cast<std::size_t>(std::clamp<long>(threads, 1, static_cast<long>(nchunks)));

    if (workers == 1) {
        for (std::size_t c = 0; c < nchunks; ++c) {
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        }
        return;
    }

    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (std::size_t c = w; c < nchunks; c += workers) {
                    fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

inline std::size_t chunk_count(std::size_t n, std::size_t chunk_size) {
    return n == 0 ? 0 : (n + chunk_size - 1) / chunk_size;
}

} // namespace vecfold

#endif
