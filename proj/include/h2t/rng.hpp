#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace h2t {

// splitmix64 finalizer; used to derive independent stream seeds from
// (base seed, tag, index) tuples so no two consumers share a stream.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ULL + b * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

// Deterministic RNG. mt19937_64 is fully specified by the standard and the
// distribution transforms below are our own, so identical seeds give
// identical streams on every platform (std::*_distribution would not).
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Unbiased integer in [0, n); rejection sampling.
    int64_t uniform_int(int64_t n) {
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return static_cast<int64_t>(x % un);
    }

    // Standard normal via Box-Muller (uncached; one value per call).
    double normal() {
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Fisher-Yates permutation of {0..n-1}.
    std::vector<int64_t> permutation(int64_t n) {
        std::vector<int64_t> idx(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        for (int64_t i = n - 1; i > 0; --i) {
            int64_t j = uniform_int(i + 1);
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        }
        return idx;
    }

private:
    std::mt19937_64 eng_;
};

} // namespace h2t
