#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace sagpool {

// All randomness in the engine flows through named substreams of one root
// seed, so fold assignment, weight init and shuffle order draw from
// independent, individually reproducible sequences. Uniform doubles and
// bounded ints are derived from the raw mt19937_64 output by hand; the
// standard distributions are implementation-defined and would break
// cross-platform determinism.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), n >= 1.
    int uniform_int(int n) {
        // Rejection sampling keeps the draw exactly uniform.
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<int>(x % un);
    }

    /// Fisher-Yates shuffle with this engine (std::shuffle is not portable).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}
} // namespace detail

/// Derives the seed of the substream `name`/`index` under `root`.
inline uint64_t substream_seed(uint64_t root, std::string_view name, uint64_t index = 0) {
    uint64_t h = detail::splitmix64(root ^ detail::fnv1a(name));
    return detail::splitmix64(h ^ detail::splitmix64(index));
}

inline Rng substream(uint64_t root, std::string_view name, uint64_t index = 0) {
    return Rng(substream_seed(root, name, index));
}

} // namespace sagpool
