#pragma once

#include <cstdint>

namespace grpo {

// Counter-based deterministic generator built on the SplitMix64 finalizer.
// The i-th 64-bit word of a stream is
//     mix(seed + (i + 1) * 0x9E3779B97F4A7C15)
// with mix the standard SplitMix64 avalanche (Steele et al.). Draws are a
// pure function of (seed, counter), so estimates are bit-reproducible across
// platforms and thread schedules.
struct CounterRng {
    std::uint64_t seed = 0;

    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t word(std::uint64_t counter) const {
        return mix(seed + (counter + 1) * kGamma);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform(std::uint64_t counter) const {
        return static_cast<double>(word(counter) >> 11) * 0x1.0p-53;
    }
};

// Derives an independent stream seed from up to three labels, e.g.
// (run seed, prompt index, iteration).
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t a,
                               std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t z = CounterRng::mix(seed ^ 0xA0761D6478BD642Full);
    z = CounterRng::mix(z ^ a);
    z = CounterRng::mix(z ^ b);
    z = CounterRng::mix(z ^ c);
    return z;
}

// Stateful convenience wrapper for fixture construction.
struct RngStream {
    CounterRng gen;
    std::uint64_t n = 0;

    explicit RngStream(std::uint64_t seed) : gen{seed} {}

    double uniform() { return gen.uniform(n++); }

    // Uniform integer in [lo, hi].
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
        return lo + gen.word(n++) % (hi - lo + 1);
    }
};

}  // namespace grpo
