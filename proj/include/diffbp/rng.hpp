#pragma once

#include <cmath>
#include <cstdint>

namespace diffbp {

// Counter-based deterministic PRNG: the state advances by the splitmix64
// increment and each output is the splitmix64 finalizer of the new state.
// Identical seeds give identical streams on every platform. Gaussian draws
// use Box-Muller and always consume exactly two raw values, so the full
// generator state is the single 64-bit counter.
class DiffusionRng {
public:
    DiffusionRng() : state_(0) {}
    explicit DiffusionRng(std::uint64_t seed) : state_(seed) {}

    // Independent stream for (seed, stream_id); used to split rng streams
    // for shuffling, noise, and per-fold training.
    static DiffusionRng derive(std::uint64_t seed, std::uint64_t stream_id) {
        return DiffusionRng(mix(seed + 0x9E3779B97F4A7C15ull * (stream_id + 1)));
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform over {0, .., n-1}.
    std::uint64_t uniform_below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller (cosine branch only).
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        // u1 == 0 would take log(0); nudge to the smallest representable draw.
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace diffbp
