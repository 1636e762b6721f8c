#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace dmlplr {

// splitmix64, used for seeding and for deriving independent sub-streams.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic seed derivation: hash (seed, tag, index) into a new seed.
// The tag separates purposes (folds, trees, bootstrap draws, ...) so that
// streams never collide; results are independent of execution schedule.
inline uint64_t derive_seed(uint64_t seed, uint64_t tag, uint64_t index = 0) {
    uint64_t s = seed;
    uint64_t a = splitmix64(s);
    s ^= tag + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2);
    uint64_t b = splitmix64(s);
    s ^= index + 0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2);
    return splitmix64(s);
}

// xoshiro256** by Blackman & Vigna, seeded via splitmix64.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
        have_spare_ = false;
        spare_ = 0.0;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Lemire's multiply-shift with rejection.
    uint32_t bounded(uint32_t n) {
        uint64_t x = next_u64() & 0xffffffffULL;
        uint64_t m = x * n;
        uint32_t l = static_cast<uint32_t>(m);
        if (l < n) {
            uint32_t t = (-n) % n;
            while (l < t) {
                x = next_u64() & 0xffffffffULL;
                m = x * n;
                l = static_cast<uint32_t>(m);
            }
        }
        return static_cast<uint32_t>(m >> 32);
    }

    // Standard normal via Box-Muller (pairs cached).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = bounded(static_cast<uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<uint64_t, 4> state_;
    bool have_spare_;
    double spare_;
};

} // namespace dmlplr
