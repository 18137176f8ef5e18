#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace pertfool {

/// Counter-based deterministic RNG (splitmix64 over seed ^ counter stream).
/// Identical seeds give identical streams on every platform, which is what
/// the reproducibility contract of the whole toolkit rests on.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed * 0x9E3779B97F4A7C15ULL + 0x1F123BB5ULL) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t next_index(std::size_t n) {
        // Rejection-free modulo is fine here: n is tiny relative to 2^64.
        return static_cast<std::size_t>(next_u64() % n);
    }

    /// Standard normal via Box-Muller (one value per call, no caching so the
    /// stream position stays predictable).
    double next_gaussian() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Derive an independent stream, e.g. per (pair, repeat) in experiments.
    Rng split(std::uint64_t stream) const {
        Rng r(0);
        r.state_ = state_ ^ (0xD1B54A32D192ED03ULL * (stream + 1));
        return r;
    }

    /// Fisher-Yates shuffle of an index vector.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = next_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace pertfool
