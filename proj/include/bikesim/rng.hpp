#pragma once

#include <cstdint>
#include <vector>

namespace bikesim {

// Deterministic RNG used everywhere in the library. Standard-library
// distributions are not bit-portable across implementations, so all draws
// go through this engine: identical seeds give identical streams on any
// platform and compiler.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Exact uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_below(std::uint64_t n) {
        // Lemire's multiply-shift with debiasing rejection.
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Binomial by explicit Bernoulli trials; n is small throughout this model.
    /// p == 1 short-circuits without consuming randomness (deterministic law).
    int binomial(int n, double p) {
        if (p >= 1.0) return n;
        if (p <= 0.0) return 0;
        int k = 0;
        for (int i = 0; i < n; ++i) k += bernoulli(p) ? 1 : 0;
        return k;
    }

    /// Draw an index from a cumulative weight table (last entry = total mass).
    std::size_t pick_cdf(const double* cdf, std::size_t n) {
        const double u = uniform() * cdf[n - 1];
        std::size_t lo = 0, hi = n - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (cdf[mid] <= u) lo = mid + 1; else hi = mid;
        }
        return lo;
    }
    std::size_t pick_cdf(const std::vector<double>& cdf) { return pick_cdf(cdf.data(), cdf.size()); }

private:
    std::uint64_t state_;
};

/// Stable 64-bit hash of (base_seed, index). Replication i always gets the
/// same seed no matter how many replications are requested.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base ^ (0x9E3779B97F4A7C15ULL * (index + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    // second round so adjacent indices decorrelate fully
    z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
    return z ^ (z >> 33);
}

}  // namespace bikesim
