#pragma once

// Deterministic chunked parallelism.
//
// Work of size n is cut into fixed-size chunks. Every chunk derives its random
// substream from (seed, stream, chunk index) and produces a partial result; the
// partials are combined by pairwise summation in chunk order. Results therefore
// depend only on (seed, n, chunk size), never on the number of worker threads.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <thread>
#include <vector>

namespace nvecho {

inline constexpr std::size_t default_chunk_size = 4096;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t chunk) noexcept {
    return splitmix64(splitmix64(splitmix64(seed) ^ (stream + 0x632BE59BD9B4E019ULL)) ^ chunk);
}

/// Uniform double in the open interval (0, 1) with 53 random bits.
inline double uniform_open01(std::mt19937_64& engine) noexcept {
    return (static_cast<double>(engine() >> 11) + 0.5) * 0x1.0p-53;
}

/// Pairwise summation; `values` is used as scratch and left in an unspecified state.
template <class T>
T pairwise_sum(std::span<T> values) {
    if (values.empty()) return T{};
    std::size_t n = values.size();
    while (n > 1) {
        const std::size_t half = n / 2;
        for (std::size_t i = 0; i < half; ++i) values[i] = values[2 * i] + values[2 * i + 1];
        if (n % 2 == 1) values[half] = values[n - 1];
        n = half + n % 2;
    }
    return values[0];
}

inline unsigned resolve_workers(unsigned requested) noexcept {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs `chunk_fn(chunk_index, begin, end) -> T` over [0, n) and returns the
/// pairwise sum of the chunk results.
template <class T, class ChunkFn>
T chunked_reduce(std::size_t n, std::size_t chunk_size, unsigned workers, ChunkFn&& chunk_fn) {
    if (n == 0) return T{};
    chunk_size = std::max<std::size_t>(chunk_size, 1);
    const std::size_t chunks = (n + chunk_size - 1) / chunk_size;
    std::vector<T> partial(chunks);
    const auto run = [&](std::size_t first, std::size_t stride) {
        for (std::size_t c = first; c < chunks; c += stride) {
            const std::size_t begin = c * chunk_size;
            partial[c] = chunk_fn(c, begin, std::min(n, begin + chunk_size));
        }
    };
    const unsigned w = std::min<std::size_t>(resolve_workers(workers), chunks);
    if (w <= 1) {
        run(0, 1);
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(w);
        for (unsigned k = 0; k < w; ++k) pool.emplace_back(run, k, w);
    }
    return pairwise_sum(std::span<T>(partial));
}

/// Applies `fn(i)` for i in [0, n) on up to `workers` threads. Each index is
/// processed exactly once; `fn` must write only to its own slot.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    const unsigned w = std::min<std::size_t>(resolve_workers(workers), std::max<std::size_t>(n, 1));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(w);
    for (unsigned k = 0; k < w; ++k) {
        pool.emplace_back([&, k] {
            for (std::size_t i = k; i < n; i += w) fn(i);
        });
    }
}

} // namespace nvecho
