#pragma once

#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

namespace era::rng {

// Counter-style splitmix64 generator. All randomness in the toolkit flows
// through this so that a (seed, key...) pair produces the same stream on
// every platform, independent of the standard library's distributions.
inline uint64_t splitmix64_next(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Mixes an extra key into a seed; used to derive independent substreams
// such as (seed, epoch) or (seed, query-id).
inline uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64_next(s);
}

inline uint64_t mix(uint64_t a, std::string_view s) { return mix(a, fnv1a(s)); }

class Stream {
public:
    explicit Stream(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() { return splitmix64_next(state_); }

    // Uniform double in [0, 1) with 53 random bits.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_unit();
    }

    // Unbiased integer in [0, n) via 128-bit multiply (Lemire).
    uint64_t next_below(uint64_t n) {
        if (n == 0) return 0;
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        uint64_t lo = static_cast<uint64_t>(m);
        if (lo < n) {
            uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * n;
                lo = static_cast<uint64_t>(m);
            }
        }
        return static_cast<uint64_t>(m >> 64);
    }

    // Box-Muller; caches the second deviate.
    double next_gaussian();

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Deterministic permutation of {0..n-1} keyed by the stream.
std::vector<size_t> permutation(size_t n, Stream& stream);

// First k elements of a keyed partial shuffle; sample order preserved,
// without replacement.
std::vector<size_t> sample_without_replacement(size_t n, size_t k, Stream& stream);

}  // namespace era::rng
