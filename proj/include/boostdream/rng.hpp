#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace boostdream {

// SplitMix64 generator with Box-Muller normals.
//
// The exact draw sequence is part of the guidance wire protocol (the mock
// sidecar replays it from a request seed), so the algorithm is fixed here
// instead of relying on implementation-defined std:: distributions.
// See docs/protocol.md.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal. Draws come in Box-Muller pairs; the second value of
    // each pair is cached and returned by the next call.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    // Independent child stream; does not advance this generator.
    Rng fork(std::uint64_t stream) const {
        Rng mixer(state_ ^ (stream * 0xD1B54A32D192ED03ULL));
        return Rng(mixer.next_u64());
    }

  private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace boostdream
