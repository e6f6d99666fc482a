#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace vseg {

// Deterministic RNG. The mt19937_64 output sequence is fully specified by the
// standard; the distribution transforms below are our own so that sampled
// sequences are reproducible across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t u64() { return eng_(); }

    // [0, 1)
    double uniform01() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

    // [a, b)
    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // inclusive on both ends, unbiased
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(u64()); // full span
        const std::uint64_t reject_below = (-range) % range;     // 2^64 mod range
        for (;;) {
            const std::uint64_t x = u64();
            if (x >= reject_below) return lo + static_cast<std::int64_t>(x % range);
        }
    }

    // Box-Muller, two uniforms per draw (no cached spare, keeps state simple)
    double normal(double mean = 0.0, double sigma = 1.0) {
        const double u1 = static_cast<double>((u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sigma * r * std::cos(6.283185307179586476925287 * u2);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // splitmix64 finalizer; used to derive independent child streams
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        return mix(seed ^ mix(stream ^ 0xD1B54A32D192ED03ull));
    }

private:
    std::mt19937_64 eng_;
};

} // namespace vseg
