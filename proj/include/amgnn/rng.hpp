#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace amgnn {

/**
 * Deterministic random source shared by coarsening tie-breaks, weight
 * initialization, data splits, and synthetic-field generation.
 *
 * std::mt19937_64 has a portable bit stream, but the standard distribution
 * adaptors do not, so uniform and normal variates are derived here by hand.
 * Two builds with the same seed produce identical sequences on any platform.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /** Uniform double in [0,1) with 53 random mantissa bits. */
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /** Uniform double in [lo,hi). */
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    /** Uniform integer in [0,n). n must be positive. */
    std::uint64_t uniform_index(std::uint64_t n) {
        // Rejection sampling removes the modulo bias.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /** Standard normal via Box-Muller; produces pairs, caches the second. */
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 == 0.0) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(t);
        have_cached_ = true;
        return r * std::cos(t);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

/**
 * Derives an independent stream seed from a base seed and a stream index,
 * so that e.g. each hierarchy level or data-collection task gets its own
 * reproducible generator. splitmix64 finalizer: good avalanche, stateless.
 */
inline std::uint64_t split_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace amgnn
