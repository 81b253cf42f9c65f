#pragma once

#include <cmath>
#include <cstdint>

namespace spatialgen {

// Counter-based generator: draw i of stream `key` is splitmix64(key + (i + 1) * kGamma).
// The constants are the published SplitMix64 ones, so any language can
// reproduce a stream bit-for-bit from (seed, counter).
class Rng {
public:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

    explicit Rng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x5347454E53454544ull)) {}

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t next() { return mix(key_ + (++counter_) * kGamma); }

    // Independent child stream; does not advance this generator.
    Rng fork(std::uint64_t stream) const {
        Rng child;
        child.key_ = mix(key_ ^ mix(stream + 0x632BE59BD9B4E019ull));
        return child;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Lemire-style rejection keeps the result unbiased.
        const std::uint64_t limit = (~0ull) - ((~0ull) % n);
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }

    // Box-Muller, one value per call (the second is discarded to keep the
    // counter arithmetic simple).
    double normal() {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace spatialgen
