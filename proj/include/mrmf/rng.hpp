#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mrmf {

// One splitmix64 step. Used for seed derivation so that every consumer of
// randomness gets an independent, reproducible stream from one master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag_a, std::uint64_t tag_b = 0) {
    std::uint64_t s = master;
    std::uint64_t h = splitmix64(s);
    s ^= tag_a * 0xD1B54A32D192ED03ull;
    h ^= splitmix64(s);
    s ^= tag_b * 0x8CB92BA72F3D8DD7ull;
    h ^= splitmix64(s);
    return h;
}

// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// float conversions below avoid std::uniform_*_distribution, whose output
// is implementation-defined, so streams are identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of randomness.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Unbiased draw from [0, n) by rejection.
    std::uint64_t next_below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace mrmf
