#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "slotforge/common.hpp"

namespace slotforge {

// xoshiro256** seeded through splitmix64. Self-contained so that every draw
// is reproducible across standard libraries and serializable into checkpoints
// as four 64-bit words.
class Rng {
 public:
    Rng() : Rng(0) {}
    explicit Rng(uint64_t seed) { reseed(seed); }
    Rng(uint64_t seed, const std::string& stream) { reseed(seed ^ fnv1a64(stream)); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : s_) w = splitmix64(x);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; two fresh uniforms per draw, no cached
    // spare, so the stream state is exactly the draw count.
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, bound).
    uint64_t below(uint64_t bound) {
        require(bound > 0, "Rng::below: bound must be positive");
        return next_u64() % bound;
    }

    std::array<uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

    std::vector<std::string> state_hex() const {
        std::vector<std::string> out;
        for (uint64_t w : s_) {
            std::ostringstream os;
            os << std::hex << w;
            out.push_back(os.str());
        }
        return out;
    }

    void set_state_hex(const std::vector<std::string>& words) {
        require(words.size() == 4, "Rng: state must have 4 words");
        for (size_t i = 0; i < 4; ++i) s_[i] = std::stoull(words[i], nullptr, 16);
    }

 private:
    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::array<uint64_t, 4> s_{};
};

}  // namespace slotforge
