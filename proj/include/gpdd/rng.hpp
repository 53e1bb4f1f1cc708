#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace gpdd::rng {

// splitmix64 finalizer; used for seeding and stream derivation.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Hash of (master seed, stream coordinates) -> independent substream seed.
// Streams are derived, never shared, so parallel replication is reproducible
// regardless of scheduling.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = mix64(master + 0x9e3779b97f4a7c15ULL);
    h = mix64(h ^ (a + 0x9e3779b97f4a7c15ULL));
    h = mix64(h ^ (b + 0x6a09e667f3bcc909ULL));
    h = mix64(h ^ (c + 0xbb67ae8584caa73bULL));
    return h;
}

// xoshiro256++ (Blackman & Vigna). State is seeded through splitmix64 so any
// 64-bit seed, including 0, is valid.
class Xoshiro256pp {
public:
    explicit Xoshiro256pp(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : state_) {
            sm += 0x9e3779b97f4a7c15ULL;
            w = mix64(sm);
        }
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_pos() {
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; the paired draw is cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u = uniform_pos();
        const double v = uniform();
        const double r = std::sqrt(-2.0 * std::log(u));
        const double t = 6.283185307179586477 * v;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

    // Integer in [0, bound) by rejection; unbiased.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> state_{};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace gpdd::rng
