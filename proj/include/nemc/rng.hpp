#pragma once

#include <cmath>
#include <cstdint>

namespace nemc {

// Deterministic random streams.  The standard <random> distributions are not
// bit-stable across standard library implementations, and every artifact this
// library emits must be bitwise reproducible from its seeds.  splitmix64 plus
// in-house samplers gives the same bytes everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Derive an independent stream from a seed and up to three stream labels
    // (e.g. image index, channel, purpose tag).  Mixing through splitmix64
    // keeps nearby labels decorrelated.
    static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
        std::uint64_t s = seed;
        s = mix(s ^ (0x9e3779b97f4a7c15ULL + a));
        s = mix(s ^ (0xbf58476d1ce4e5b9ULL + b));
        s = mix(s ^ (0x94d049bb133111ebULL + c));
        return Rng(s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform in [0, 1).  53-bit mantissa so doubles are exact.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).  n must be > 0.  Rejection-free modulo is
    // fine here: n is tiny compared to 2^64, bias is < 2^-50.
    std::uint64_t next_below(std::uint64_t n) {
        return next_u64() % n;
    }

    // Uniform in [lo, hi).
    double next_range(double lo, double hi) {
        return lo + (hi - lo) * next_unit();
    }

    // Standard normal via Box-Muller.  Deterministic and platform-stable.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = next_unit();
        } while (u1 <= 0.0);
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    bool next_bool() { return (next_u64() & 1ULL) != 0; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace nemc
