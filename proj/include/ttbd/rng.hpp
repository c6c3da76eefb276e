#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ttbd {

// Deterministic RNG. std::mt19937_64 has a standardized output sequence, but
// the standard distributions do not, so the draws below are hand-rolled to
// keep results byte-identical across compilers and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Unbiased integer in [0, bound) via rejection sampling.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % bound;
    }

    // Uniform float in [0, 1) with 24 bits of randomness.
    float next_float() {
        return static_cast<float>(engine_() >> 40) * 0x1.0p-24f;
    }

    float next_float(float lo, float hi) { return lo + (hi - lo) * next_float(); }

    // Standard normal via Box-Muller. Draws two uniforms per call; the spare
    // is not cached so the stream stays a pure function of call count.
    float next_gaussian() {
        float u1 = next_float();
        while (u1 <= 0.0f) u1 = next_float();
        const float u2 = next_float();
        const float r = std::sqrt(-2.0f * std::log(u1));
        return r * std::cos(6.28318530717958647692f * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// splitmix64 finalizer, used to derive independent child seeds from a
// (seed, index, ...) tuple without correlation between streams.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) {
    return mix_seed(seed ^ mix_seed(a));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix_seed(derive_seed(seed, a) ^ mix_seed(b + 0x517cc1b727220a95ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) {
    return mix_seed(derive_seed(seed, a, b) ^ mix_seed(c + 0x2545f4914f6cdd1dULL));
}

}  // namespace ttbd
